use crate::error::{Error, Result};

/// Default eigenvalue-ratio cut.
pub const KAPPA: f64 = 5.0;

/// Eigenvalues `(λ_max, λ_min)` of the weighted 2×2 positional covariance.
/// Weights are normalized internally.
pub fn covariance_eigenvalues(positions: &[(f64, f64)], weights: &[f64]) -> Result<(f64, f64)> {
    if positions.len() != weights.len() || positions.is_empty() {
        return Err(Error::Contract(
            "positions and weights must be non-empty and equally long".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Domain(
            "weights must have a positive finite sum".into(),
        ));
    }
    let (mut mx, mut my) = (0.0, 0.0);
    for (&(x, y), w) in positions.iter().zip(weights) {
        mx += w * x / total;
        my += w * y / total;
    }
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&(x, y), w) in positions.iter().zip(weights) {
        let (dx, dy) = (x - mx, y - my);
        let w = w / total;
        sxx += w * dx * dx;
        sxy += w * dx * dy;
        syy += w * dy * dy;
    }
    let half_tr = 0.5 * (sxx + syy);
    let disc = (0.25 * (sxx - syy) * (sxx - syy) + sxy * sxy).sqrt();
    Ok((half_tr + disc, (half_tr - disc).max(0.0)))
}

/// 1 when `λ_max / λ_min > kappa`, else 0. A swarm concentrated on a single
/// point has no spread in any direction and counts as non-degenerate; a
/// swarm with spread along exactly one line has an unbounded ratio.
pub fn detect_covariance_baseline(
    positions: &[(f64, f64)],
    weights: &[f64],
    kappa: f64,
) -> Result<f64> {
    if positions.len() < 3 {
        return Err(Error::Contract(
            "the covariance baseline needs at least 3 particles".into(),
        ));
    }
    let (hi, lo) = covariance_eigenvalues(positions, weights)?;
    let scale = positions
        .iter()
        .fold(0.0f64, |m, (x, y)| m.max(x.abs()).max(y.abs()))
        .max(1.0);
    if hi <= 1e-24 * scale * scale {
        return Ok(0.0);
    }
    Ok(if lo <= 0.0 || hi / lo > kappa {
        1.0
    } else {
        0.0
    })
}

#[cfg(test)]
mod tests {
    use rand::Rng as _;

    use super::*;
    use crate::rng;

    #[test]
    fn circle_is_isotropic() {
        let pts: Vec<(f64, f64)> = (0..12)
            .map(|k| {
                let a = k as f64 * std::f64::consts::TAU / 12.0;
                (3.0 + a.cos(), -1.0 + a.sin())
            })
            .collect();
        let (hi, lo) = covariance_eigenvalues(&pts, &[1.0; 12]).unwrap();
        assert!((hi / lo - 1.0).abs() < 1e-9);
        assert_eq!(
            detect_covariance_baseline(&pts, &[1.0; 12], KAPPA).unwrap(),
            0.0
        );
    }

    #[test]
    fn line_with_jitter_is_degenerate() {
        let mut r = rng::seeded(2);
        let pts: Vec<(f64, f64)> = (0..30)
            .map(|k| (k as f64 * 0.1, r.random_range(-0.01..0.01)))
            .collect();
        let w = vec![1.0; 30];
        // oracle: eigenvalues of [[a, b], [b, c]] from the characteristic polynomial
        let n = 30.0;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let a = pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>() / n;
        let c = pts.iter().map(|p| (p.1 - my).powi(2)).sum::<f64>() / n;
        let b = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / n;
        let (tr, det) = (a + c, a * c - b * b);
        let l1 = tr / 2.0 + (tr * tr / 4.0 - det).sqrt();
        let l2 = tr / 2.0 - (tr * tr / 4.0 - det).sqrt();
        let (hi, lo) = covariance_eigenvalues(&pts, &w).unwrap();
        assert!((hi - l1).abs() < 1e-12 && (lo - l2).abs() < 1e-9);
        assert!(hi / lo > 1000.0);
        assert_eq!(detect_covariance_baseline(&pts, &w, KAPPA).unwrap(), 1.0);
    }

    #[test]
    fn colocated_is_non_degenerate() {
        let pts = vec![(2.0, 2.0); 5];
        assert_eq!(
            detect_covariance_baseline(&pts, &[0.2; 5], KAPPA).unwrap(),
            0.0
        );
        assert!(matches!(
            detect_covariance_baseline(&pts[..2], &[0.5; 2], KAPPA),
            Err(Error::Contract(_))
        ));
    }
}
