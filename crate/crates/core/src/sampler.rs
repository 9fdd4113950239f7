//! Exact sampling of the Gaussian vector `(X_T^{u_i})_{i=0..n}` and the
//! fine-to-coarse restriction that couples MLMC levels.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use crate::error::{Error, Result};
use crate::linalg::{CholeskyFactor, Matrix};
use crate::model::{GaussianSpec, ModelParams};
use crate::rng::Stream;

/// One draw of the log forward variances on an `n`-step grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSample {
    pub values: Vec<f64>,
    pub grid_n: usize,
}

impl GaussianSample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::usage("a sample needs at least two grid values (n >= 1)"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("sample contains non-finite values"));
        }
        let grid_n = values.len() - 1;
        Ok(Self { values, grid_n })
    }
}

/// Gaussian law plus its factor, shared across workers.
#[derive(Debug)]
pub struct PreparedGrid {
    pub spec: GaussianSpec,
    pub factor: CholeskyFactor,
}

impl PreparedGrid {
    pub fn build(params: &ModelParams, n: usize) -> Result<Self> {
        let spec = GaussianSpec::new(params, n)?;
        let factor = cholesky_factor(&spec.cov, format!("{}#n={n}", params.cache_key()))?;
        Ok(Self { spec, factor })
    }

    pub fn n(&self) -> usize {
        self.spec.grid.n
    }

    /// Draws into `out` (length n+1) using the scratch buffer `g`.
    #[inline]
    pub fn draw_into(&self, stream: &mut Stream, g: &mut [f64], out: &mut [f64]) {
        stream.fill_normals(g);
        self.factor.affine_apply(&self.spec.mean, g, out);
    }
}

type CacheMap = HashMap<(String, usize), Arc<PreparedGrid>>;

fn cache() -> &'static RwLock<CacheMap> {
    static CACHE: OnceLock<RwLock<CacheMap>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Cached Gaussian law and factor for `(params, n)`; building is idempotent.
pub fn prepared(params: &ModelParams, n: usize) -> Result<Arc<PreparedGrid>> {
    let key = (params.cache_key(), n);
    if let Some(hit) = cache().read().expect("cache lock").get(&key) {
        return Ok(hit.clone());
    }
    let built = Arc::new(PreparedGrid::build(params, n)?);
    let mut map = cache().write().expect("cache lock");
    Ok(map.entry(key).or_insert(built).clone())
}

/// Cholesky factor with the diagonal jitter retry.
pub fn cholesky_factor(cov: &Matrix, source_key: impl Into<String>) -> Result<CholeskyFactor> {
    CholeskyFactor::new(cov, source_key)
}

/// `mean + L G` with `G` standard normal from `stream`.
pub fn sample_fine(factor: &CholeskyFactor, mean: &[f64], stream: &mut Stream) -> Result<GaussianSample> {
    let dim = factor.dim();
    if mean.len() != dim {
        return Err(Error::usage(format!("sample: mean has length {}, factor has {dim}", mean.len())));
    }
    let mut g = vec![0.0; dim];
    let mut out = vec![0.0; dim];
    stream.fill_normals(&mut g);
    factor.affine_apply(mean, &g, &mut out);
    GaussianSample::new(out)
}

/// Every second grid value: the exact sample on the grid with `n/2` steps.
pub fn restrict_to_coarse(fine: &GaussianSample) -> Result<GaussianSample> {
    if !fine.grid_n.is_multiple_of(2) {
        return Err(Error::usage(format!("restriction needs an even grid, got n={}", fine.grid_n)));
    }
    restrict_by(fine, 2)
}

/// Every `stride`-th grid value; `stride` must divide `n`.
pub fn restrict_by(fine: &GaussianSample, stride: usize) -> Result<GaussianSample> {
    if stride == 0 || !fine.grid_n.is_multiple_of(stride) {
        return Err(Error::usage(format!("stride {stride} does not divide n={}", fine.grid_n)));
    }
    GaussianSample::new(fine.values.iter().step_by(stride).copied().collect())
}
