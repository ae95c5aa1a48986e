//! Dense least squares via Householder QR with unit-norm column scaling.

/// Relative threshold on |R_jj| (columns are unit norm) below which column j
/// is treated as lying in the span of the earlier columns.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LstsqError {
    /// Column `j` is (numerically) a combination of columns `0..j`.
    Dependent(usize),
    ZeroColumn(usize),
}

#[derive(Debug, Clone)]
pub(crate) struct Lstsq {
    pub coefficients: Vec<f64>,
    /// Diagonal of `(XᵀX)⁻¹` in the original (unscaled) coordinates.
    pub inv_normal_diag: Vec<f64>,
}

/// Solves `min ||X β - y||` for a row-major `rows × cols` design.
pub(crate) fn lstsq(design: &[Vec<f64>], y: &[f64]) -> Result<Lstsq, LstsqError> {
    let rows = design.len();
    let cols = design.first().map_or(0, Vec::len);
    debug_assert_eq!(rows, y.len());
    debug_assert!(rows >= cols);

    // column-major working copy, scaled to unit norm
    let mut a: Vec<Vec<f64>> = (0..cols)
        .map(|j| design.iter().map(|r| r[j]).collect())
        .collect();
    let mut scale = vec![0.0; cols];
    for (j, col) in a.iter_mut().enumerate() {
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(LstsqError::ZeroColumn(j));
        }
        col.iter_mut().for_each(|v| *v /= norm);
        scale[j] = norm;
    }
    let mut b = y.to_vec();

    let mut r_diag = vec![0.0; cols];
    for k in 0..cols {
        let norm = a[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= RANK_TOL {
            return Err(LstsqError::Dependent(k));
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        // v = x - alpha e1, stored in place of column k
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        r_diag[k] = alpha;
        a[k][k] = alpha;
        for x in a[k][k + 1..].iter_mut() {
            *x = 0.0;
        }
        if vnorm2 == 0.0 {
            continue;
        }
        for col in a.iter_mut().skip(k + 1) {
            reflect(&mut col[k..], &v, vnorm2);
        }
        reflect(&mut b[k..], &v, vnorm2);
    }

    // back substitution R β = Qᵀ y
    let mut beta = vec![0.0; cols];
    for i in (0..cols).rev() {
        let mut s = b[i];
        for (j, bj) in beta.iter().enumerate().skip(i + 1) {
            s -= a[j][i] * bj;
        }
        beta[i] = s / r_diag[i];
    }

    // R⁻¹ (upper triangular), then diag(R⁻¹ R⁻ᵀ)
    let mut rinv = vec![vec![0.0; cols]; cols];
    for j in 0..cols {
        rinv[j][j] = 1.0 / a[j][j];
        for i in (0..j).rev() {
            let mut s = 0.0;
            for k in i + 1..=j {
                s += a[k][i] * rinv[k][j];
            }
            rinv[i][j] = -s / a[i][i];
        }
    }
    let inv_normal_diag = (0..cols)
        .map(|i| {
            let row_sq: f64 = (i..cols).map(|j| rinv[i][j] * rinv[i][j]).sum();
            row_sq / (scale[i] * scale[i])
        })
        .collect();

    Ok(Lstsq {
        coefficients: beta.iter().zip(&scale).map(|(b, s)| b / s).collect(),
        inv_normal_diag,
    })
}

fn reflect(x: &mut [f64], v: &[f64], vnorm2: f64) {
    let dot: f64 = x.iter().zip(v).map(|(a, b)| a * b).sum();
    let f = 2.0 * dot / vnorm2;
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= f * vi;
    }
}
