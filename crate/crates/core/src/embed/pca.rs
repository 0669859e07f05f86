use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Projection of the rows of `vectors` onto their top two principal
/// components. Each component is signed so that its first nonzero loading is
/// positive.
pub fn pca2(vectors: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, d) = vectors.shape();
    if n < 2 {
        return Err(Error::input("PCA needs at least two rows"));
    }
    if d < 2 {
        return Err(Error::input(
            "PCA to two components needs at least two columns",
        ));
    }
    let mean = vectors.row_mean();
    let mut centered = vectors.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let svd = centered.clone().svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Internal("SVD did not return components".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut components = DMatrix::zeros(d, 2);
    for (c, &idx) in order.iter().take(2).enumerate() {
        let mut loading: Vec<f64> = v_t.row(idx).iter().copied().collect();
        let scale = loading.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if let Some(first) = loading
            .iter()
            .find(|x| x.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE))
        {
            if *first < 0.0 {
                loading.iter_mut().for_each(|x| *x = -*x);
            }
        }
        for (k, x) in loading.into_iter().enumerate() {
            components[(k, c)] = x;
        }
    }
    Ok(centered * components)
}
