use crate::error::{Error, Result};

pub const PCA_TOLERANCE: f64 = 1e-8;
pub const PCA_MAX_ITERATIONS: usize = 1000;

/// Leading principal component of a set of vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalComponent {
    /// Unit vector whose largest-magnitude entry is positive.
    pub component: Vec<f64>,
    /// Variance along the component.
    pub variance: f64,
    /// Projection of each centered input vector onto the component.
    pub projections: Vec<f64>,
    pub iterations: usize,
    /// All centered vectors are zero; projections are all zero.
    pub degenerate: bool,
}

/// Centers `vectors` (no whitening) and finds the top eigenvector of their
/// covariance by power iteration.
pub fn top_principal_component(vectors: &[Vec<f64>]) -> Result<PrincipalComponent> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::invalid("pca", format!("need at least 2 vectors, got {n}")));
    }
    let d = vectors[0].len();
    if d == 0 || vectors.iter().any(|v| v.len() != d) {
        return Err(Error::invalid("pca", "vectors must share a non-zero dimension"));
    }
    let mut mean = vec![0.0; d];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();

    let mut cov = vec![0.0; d * d];
    for v in &centered {
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += v[i] * v[j];
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= (n - 1) as f64);
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    if trace == 0.0 {
        log::warn!("pca: all vectors are identical; the component is arbitrary");
        let mut component = vec![0.0; d];
        component[0] = 1.0;
        return Ok(PrincipalComponent {
            component,
            variance: 0.0,
            projections: vec![0.0; n],
            iterations: 0,
            degenerate: true,
        });
    }

    let matvec = |v: &[f64]| -> Vec<f64> { (0..d).map(|i| (0..d).map(|j| cov[i * d + j] * v[j]).sum()).collect() };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();

    // Start from the covariance column of the highest-variance coordinate.
    let start = (0..d).fold(0, |best, i| if cov[i * d + i] > cov[best * d + best] { i } else { best });
    let mut v: Vec<f64> = (0..d).map(|i| cov[i * d + start]).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < PCA_MAX_ITERATIONS {
        iterations += 1;
        let mut w = matvec(&v);
        let lambda = norm(&w);
        w.iter_mut().for_each(|x| *x /= lambda);
        residual = w.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        v = w;
        if residual < PCA_TOLERANCE {
            break;
        }
    }
    if residual >= PCA_TOLERANCE {
        return Err(Error::NoConvergence { residual, iterations });
    }

    let pivot = (0..d).fold(0, |best, i| if v[i].abs() > v[best].abs() { i } else { best });
    if v[pivot] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let cv = matvec(&v);
    let variance = cv.iter().zip(&v).map(|(a, b)| a * b).sum();
    let projections = centered
        .iter()
        .map(|c| c.iter().zip(&v).map(|(a, b)| a * b).sum())
        .collect();
    Ok(PrincipalComponent {
        component: v,
        variance,
        projections,
        iterations,
        degenerate: false,
    })
}

/// Indices of the `m` most negative and `m` most positive projections,
/// each list ordered from the extreme inward. Ties go to the smaller index.
pub fn extremes(projections: &[f64], m: usize) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..projections.len()).collect();
    order.sort_by(|&a, &b| projections[a].total_cmp(&projections[b]).then(a.cmp(&b)));
    let negative = order.iter().copied().take(m).collect();
    let mut by_desc = order.clone();
    by_desc.sort_by(|&a, &b| projections[b].total_cmp(&projections[a]).then(a.cmp(&b)));
    (negative, by_desc.into_iter().take(m).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_aligned_points() {
        let pts = vec![vec![3.0, 1.0], vec![-1.0, 1.0], vec![1.0, 1.0]];
        let pc = top_principal_component(&pts).unwrap();
        assert!((pc.component[0] - 1.0).abs() < 1e-12 && pc.component[1].abs() < 1e-12);
        let expected = [2.0, -2.0, 0.0];
        for (p, e) in pc.projections.iter().zip(expected) {
            assert!((p - e).abs() < 1e-12);
        }
        assert!((pc.variance - 4.0).abs() < 1e-12);
    }

    #[test]
    fn two_points_along_first_axis() {
        let pc = top_principal_component(&[vec![5.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        assert_eq!(pc.component, vec![1.0, 0.0]);
        assert_eq!(pc.projections, vec![3.0, -3.0]);
    }

    #[test]
    fn sign_convention_and_order_invariance() {
        let pts = vec![vec![0.1, -2.0, 0.3], vec![0.0, 1.5, -0.2], vec![0.4, -0.7, 0.0], vec![-0.2, 2.2, 0.1]];
        let a = top_principal_component(&pts).unwrap();
        let pivot = (0..3).max_by(|&i, &j| a.component[i].abs().total_cmp(&a.component[j].abs())).unwrap();
        assert!(a.component[pivot] > 0.0);
        let mut rev = pts.clone();
        rev.reverse();
        let b = top_principal_component(&rev).unwrap();
        for (x, y) in a.component.iter().zip(&b.component) {
            assert!((x - y).abs() < 1e-7);
        }
        for (x, y) in a.projections.iter().zip(b.projections.iter().rev()) {
            assert!((x - y).abs() < 1e-7);
        }
    }

    #[test]
    fn degenerate_and_invalid_inputs() {
        let pc = top_principal_component(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert!(pc.degenerate);
        assert_eq!(pc.projections, vec![0.0; 3]);
        assert!(top_principal_component(&[vec![1.0]]).is_err());
        assert!(top_principal_component(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn extreme_projections() {
        let (neg, pos) = extremes(&[0.5, -1.0, 2.0, -1.0, 0.0], 2);
        assert_eq!(neg, vec![1, 3]);
        assert_eq!(pos, vec![2, 0]);
    }
}
