//! Thin SVD backed by `faer`, returned as plain column vectors.

use faer::Mat;

use crate::error::{Error, Result};

/// `A = Σ_k σ_k u_k v_kᵀ` with `k < min(rows, cols)` and `σ` non-increasing.
pub(crate) struct ThinSvd {
    pub sigma: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

/// `entry(i, j)` is read once per entry of the `rows × cols` matrix.
pub(crate) fn thin_svd(rows: usize, cols: usize, entry: impl Fn(usize, usize) -> f64) -> Result<ThinSvd> {
    let a = Mat::<f64>::from_fn(rows, cols, entry);
    let svd = a
        .thin_svd()
        .map_err(|e| Error::NumericalFailure(format!("SVD did not converge: {e:?}")))?;
    let s = svd.S().column_vector();
    let k = s.nrows();
    let mut order: Vec<usize> = (0..k).collect();
    // stable: equal values keep the decomposition's column order
    order.sort_by(|&x, &y| s[y].total_cmp(&s[x]));
    let (u, v) = (svd.U(), svd.V());
    Ok(ThinSvd {
        sigma: order.iter().map(|&j| s[j]).collect(),
        u: order.iter().map(|&j| (0..rows).map(|i| u[(i, j)]).collect()).collect(),
        v: order.iter().map(|&j| (0..cols).map(|i| v[(i, j)]).collect()).collect(),
    })
}
