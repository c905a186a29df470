use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::media_io::ControlSignal;

/// Running median with replicate padding at both ends.
pub fn median_filter(track: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::Config(format!("median window must be odd and positive, got {window}")));
    }
    if track.is_empty() {
        return Ok(Vec::new());
    }
    let half = (window / 2) as isize;
    let last = track.len() as isize - 1;
    let mut buf = Vec::with_capacity(window);
    Ok((0..track.len() as isize)
        .map(|i| {
            buf.clear();
            buf.extend((i - half..=i + half).map(|j| track[j.clamp(0, last) as usize]));
            buf.sort_by(f64::total_cmp);
            buf[window / 2]
        })
        .collect())
}

/// Linear interpolation onto `target` evenly spaced points spanning the
/// same endpoints. A single input value fills the output; a single output
/// point takes the first input value.
pub fn resize_linear(track: &[f64], target: usize) -> Result<Vec<f64>> {
    if track.is_empty() {
        return Err(Error::Validation("cannot resize an empty track".into()));
    }
    if target == 0 {
        return Err(Error::Config("target length must be positive".into()));
    }
    if target == track.len() {
        return Ok(track.to_vec());
    }
    if track.len() == 1 || target == 1 {
        return Ok(vec![track[0]; target]);
    }
    let scale = (track.len() - 1) as f64 / (target - 1) as f64;
    Ok((0..target)
        .map(|i| {
            if i == target - 1 {
                return track[track.len() - 1];
            }
            let pos = i as f64 * scale;
            let lo = pos.floor() as usize;
            let frac = pos - lo as f64;
            if frac == 0.0 {
                track[lo]
            } else {
                track[lo] + (track[lo + 1] - track[lo]) * frac
            }
        })
        .collect())
}

/// Median-filters each track, resizes it to `target_len` and stacks the
/// results as columns (loudness, pitch, centroid).
pub fn prepare_target(sig: &ControlSignal, target_len: usize, median_window: usize) -> Result<DMatrix<f64>> {
    sig.validate()?;
    let tracks = [&sig.loudness_db, &sig.pitch_midi, &sig.centroid_midi];
    let mut out = DMatrix::zeros(target_len, 3);
    for (col, track) in tracks.into_iter().enumerate() {
        let track: Vec<f64> = track.iter().map(|&v| v as f64).collect();
        let resized = resize_linear(&median_filter(&track, median_window)?, target_len)?;
        out.set_column(col, &nalgebra::DVector::from_vec(resized));
    }
    Ok(out)
}

pub fn mse(pred: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Shape("empty matrices".into()));
    }
    Ok((pred - target).iter().map(|d| d * d).sum::<f64>() / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn median_examples() {
        assert_eq!(median_filter(&[3.0; 6], 5).unwrap(), vec![3.0; 6]);
        assert_eq!(median_filter(&[0., 0., 10., 0., 0.], 3).unwrap(), vec![0.0; 5]);
        let x = [1.0, 5.0, -2.0, 8.0];
        assert_eq!(median_filter(&x, 1).unwrap(), x.to_vec());
        assert!(matches!(median_filter(&x, 4), Err(Error::Config(_))));
    }

    #[test]
    fn resize_examples() {
        assert_eq!(resize_linear(&[0.0, 10.0], 3).unwrap(), vec![0.0, 5.0, 10.0]);
        assert_eq!(resize_linear(&[7.0], 4).unwrap(), vec![7.0; 4]);
        let x = [1.0, 2.5, -3.0];
        assert_eq!(resize_linear(&x, 3).unwrap(), x.to_vec());
    }

    #[test]
    fn target_identity_and_constant() {
        let sig = ControlSignal::new(vec![-10.0, -20.0, -15.0], vec![60.0, 0.0, 61.0], vec![70.0, 71.0, 72.0], 10.0)
            .unwrap();
        let t = prepare_target(&sig, 3, 1).unwrap();
        for i in 0..3 {
            for c in 0..3 {
                assert_eq!(t[(i, c)], sig.frame(i)[c] as f64);
            }
        }
        let flat = ControlSignal::new(vec![-30.0; 9], vec![50.0; 9], vec![80.0; 9], 10.0).unwrap();
        let t = prepare_target(&flat, 20, 5).unwrap();
        assert!(t.column(0).iter().all(|&v| v == -30.0));
        assert!(t.column(2).iter().all(|&v| v == 80.0));
    }

    #[test]
    fn impulse_removed_from_target() {
        let mut loud = vec![-40.0f32; 20];
        loud[7] = -2.0;
        loud[8] = -2.0;
        let sig = ControlSignal::new(loud, vec![0.0; 20], vec![0.0; 20], 10.0).unwrap();
        let t = prepare_target(&sig, 20, 5).unwrap();
        assert!(t.column(0).iter().all(|&v| v == -40.0));
    }

    #[test]
    fn mse_examples() {
        let a = DMatrix::from_row_slice(2, 3, &[1., 2., 3., 4., 5., 6.]);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mse(&a.add_scalar(1.0), &a).unwrap(), 1.0);
        let p = DMatrix::from_row_slice(1, 3, &[0., 0., 0.]);
        let t = DMatrix::from_row_slice(1, 3, &[3., 0., 0.]);
        assert_eq!(mse(&p, &t).unwrap(), 3.0);
        assert!(mse(&p, &a).is_err());
    }

    proptest! {
        #[test]
        fn median_idempotent_on_monotone(mut xs in prop::collection::vec(-100.0f64..100.0, 1..40), w in 0usize..4) {
            xs.sort_by(f64::total_cmp);
            let once = median_filter(&xs, 2 * w + 1).unwrap();
            prop_assert_eq!(&once, &xs);
            prop_assert_eq!(median_filter(&once, 2 * w + 1).unwrap(), once);
        }

        #[test]
        fn resize_stays_within_bounds(xs in prop::collection::vec(-100.0f64..100.0, 1..40), n in 1usize..100) {
            let out = resize_linear(&xs, n).unwrap();
            let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(out.len(), n);
            prop_assert!(out.iter().all(|&v| v >= lo && v <= hi));
            if n > 1 {
                prop_assert_eq!(out[0], xs[0]);
                prop_assert_eq!(out[n - 1], xs[xs.len() - 1]);
            }
        }
    }
}
