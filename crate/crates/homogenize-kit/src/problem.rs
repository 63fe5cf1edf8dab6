//! Problem definitions: the multiscale coefficient set, its structural
//! validation, and the built-in benchmark registry.
//!
//! A problem consists of the fast-row diffusion `phi` (k entries), slow
//! drift `b_tilde` (d entries), slow diffusion `sigma_tilde` (d x k), the
//! backward generator `f`, the terminal/initial datum `H`, and the
//! validation bounds (lambda, C1, K, p). Stacking `phi` over `sigma_tilde`
//! gives the full diffusion `sigma` ((d+1) x k), from which
//! `a = (1/2) sigma sigma*`, `a00`, and `rho = 1/a00` are derived.

use crate::coeffex::{self, EvalError, Expr, VarSet};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    /// Uniform ellipticity floor for `a`.
    pub lambda: f64,
    /// Growth constant of (A2).
    pub c1: f64,
    /// Lipschitz/growth constant of (C1).
    pub k_lip: f64,
    /// Polynomial growth exponent of (C1).
    pub p_growth: u32,
}

/// Separable decomposition of the generator, `f = g(x1) * h(x2) + ell(y, z)`,
/// recorded when the coefficients are built that way. Lets the averaging and
/// PDE layers precompute the spatial part instead of re-averaging per call.
#[derive(Debug, Clone)]
pub struct SeparableF {
    pub g_fast: Expr,
    pub h_slow: Expr,
    pub ell: Expr,
    pub g_vars: VarSet,
    pub h_vars: VarSet,
    pub ell_vars: VarSet,
}

impl SeparableF {
    pub fn eval(&self, x1: f64, x2: &[f64], y: f64, z: &[f64]) -> Result<f64, EvalError> {
        let g = self.g_fast.eval(&[x1])?;
        let h = self.h_slow.eval(x2)?;
        let mut env = Vec::with_capacity(1 + z.len());
        env.push(y);
        env.extend_from_slice(z);
        let ell = self.ell.eval(&env)?;
        Ok(g * h + ell)
    }
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    /// Slow-component dimension.
    pub d: usize,
    /// Brownian dimension; constrained to `d + 1` so `sigma` is square and
    /// invertible under the sampled ellipticity.
    pub k: usize,
    pub phi: Vec<Expr>,
    pub b_tilde: Vec<Expr>,
    pub sigma_tilde: Vec<Vec<Expr>>,
    pub f: Expr,
    pub h: Expr,
    pub bounds: Bounds,
    pub separable_f: Option<SeparableF>,
    spatial_vars: VarSet,
    generator_vars: VarSet,
}

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("coefficient `{name}`: {source}")]
    Parse {
        name: String,
        #[source]
        source: coeffex::ParseError,
    },
    #[error("domain error evaluating `{name}`: {source}")]
    Eval {
        name: String,
        #[source]
        source: EvalError,
    },
    #[error("structural error: {0}")]
    Structure(String),
    #[error("problem file: {0}")]
    File(String),
    #[error("validation failed: {0}")]
    Validation(String),
}

/// Identifiers of the built-in benchmark problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchmarkId {
    /// Fast coordinate driven by `sqrt(2/(2+tanh(x1)))`; the tanh averages
    /// differ by direction, so every effective coefficient jumps at `x1 = 0`.
    Bm1TanhFast,
    /// Same construction with `sin` in place of `tanh`: oscillating but with
    /// equal Cesaro limits in both directions, hence continuous averages.
    Bm2Periodic,
    /// Coefficients independent of `x1`; averaging is the identity.
    Bm3X1Free,
}

impl BenchmarkId {
    pub fn name(self) -> &'static str {
        match self {
            BenchmarkId::Bm1TanhFast => "BM1_tanh_fast",
            BenchmarkId::Bm2Periodic => "BM2_periodic",
            BenchmarkId::Bm3X1Free => "BM3_x1_free",
        }
    }

    pub fn from_name(name: &str) -> Option<BenchmarkId> {
        Some(match name {
            "BM1_tanh_fast" => BenchmarkId::Bm1TanhFast,
            "BM2_periodic" => BenchmarkId::Bm2Periodic,
            "BM3_x1_free" => BenchmarkId::Bm3X1Free,
            _ => return None,
        })
    }

    pub fn all() -> [BenchmarkId; 3] {
        [BenchmarkId::Bm1TanhFast, BenchmarkId::Bm2Periodic, BenchmarkId::Bm3X1Free]
    }
}

/// Fixed, fully specified benchmark problems.
pub fn registry(id: BenchmarkId) -> ProblemSpec {
    let bounds = Bounds { lambda: 0.25, c1: 2.0, k_lip: 2.0, p_growth: 2 };
    let build = |phi: [&str; 2], b: &str, f: &str, sep: Option<[&str; 3]>| {
        ProblemSpec::from_sources(
            1,
            2,
            &[phi[0], phi[1]],
            &[b],
            &[&["0", "1"]],
            f,
            "exp(-x1^2 - x2_1^2)",
            bounds,
            sep,
        )
        .expect("registry benchmark must build")
    };
    match id {
        BenchmarkId::Bm1TanhFast => build(
            ["sqrt(2/(2+tanh(x1)))", "0"],
            "tanh(x1)",
            "tanh(x1)*cos(x2_1) - y + 0.5*z_1",
            Some(["tanh(x1)", "cos(x2_1)", "-y + 0.5*z_1"]),
        ),
        BenchmarkId::Bm2Periodic => build(
            ["sqrt(2/(2+sin(x1)))", "0"],
            "sin(x1)",
            "sin(x1)*cos(x2_1) - y + 0.5*z_1",
            Some(["sin(x1)", "cos(x2_1)", "-y + 0.5*z_1"]),
        ),
        BenchmarkId::Bm3X1Free => build(
            ["1", "0"],
            "-0.2*x2_1",
            "-y + 0.5*z_1 + cos(x2_1)",
            Some(["1", "cos(x2_1)", "-y + 0.5*z_1"]),
        ),
    }
}

impl ProblemSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn from_sources(
        d: usize,
        k: usize,
        phi: &[&str],
        b_tilde: &[&str],
        sigma_tilde: &[&[&str]],
        f: &str,
        h: &str,
        bounds: Bounds,
        separable: Option<[&str; 3]>,
    ) -> Result<ProblemSpec, ProblemError> {
        if d == 0 {
            return Err(ProblemError::Structure("d must be positive".into()));
        }
        if k != d + 1 {
            return Err(ProblemError::Structure(format!(
                "k must equal d+1 (got d={d}, k={k})"
            )));
        }
        if phi.len() != k {
            return Err(ProblemError::Structure(format!(
                "phi must have k={k} entries, got {}",
                phi.len()
            )));
        }
        if b_tilde.len() != d {
            return Err(ProblemError::Structure(format!(
                "b_tilde must have d={d} entries, got {}",
                b_tilde.len()
            )));
        }
        if sigma_tilde.len() != d || sigma_tilde.iter().any(|row| row.len() != k) {
            return Err(ProblemError::Structure(format!(
                "sigma_tilde must be a {d}x{k} matrix"
            )));
        }
        if !(bounds.lambda > 0.0 && bounds.c1 > 0.0 && bounds.k_lip > 0.0) {
            return Err(ProblemError::Structure(
                "bounds lambda, C1, K must be positive".into(),
            ));
        }

        let spatial = VarSet::spatial(d);
        let generator = VarSet::generator(d);
        let parse = |name: &str, src: &str, vars: &VarSet| {
            coeffex::parse(src, vars)
                .map_err(|source| ProblemError::Parse { name: name.to_owned(), source })
        };

        let phi = phi
            .iter()
            .enumerate()
            .map(|(i, src)| parse(&format!("phi_{}", i + 1), src, &spatial))
            .collect::<Result<Vec<_>, _>>()?;
        let b_tilde = b_tilde
            .iter()
            .enumerate()
            .map(|(i, src)| parse(&format!("b_tilde_{}", i + 1), src, &spatial))
            .collect::<Result<Vec<_>, _>>()?;
        let sigma_tilde = sigma_tilde
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, src)| {
                        parse(&format!("sigma_tilde_{}_{}", i + 1, j + 1), src, &spatial)
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let f_expr = parse("f", f, &generator)?;
        let h_expr = parse("H", h, &spatial)?;

        let separable_f = match separable {
            None => None,
            Some([g_src, h_src, ell_src]) => {
                let g_vars = VarSet::new(&["x1"]);
                let mut x2_names = Vec::new();
                for i in 1..=d {
                    x2_names.push(format!("x2_{i}"));
                }
                let h_vars = VarSet::new(&x2_names);
                let mut ell_names = vec!["y".to_owned()];
                for i in 0..=d {
                    ell_names.push(format!("z_{i}"));
                }
                let ell_vars = VarSet::new(&ell_names);
                Some(SeparableF {
                    g_fast: parse("separable.g", g_src, &g_vars)?,
                    h_slow: parse("separable.h", h_src, &h_vars)?,
                    ell: parse("separable.ell", ell_src, &ell_vars)?,
                    g_vars,
                    h_vars,
                    ell_vars,
                })
            }
        };

        Ok(ProblemSpec {
            d,
            k,
            phi,
            b_tilde,
            sigma_tilde,
            f: f_expr,
            h: h_expr,
            bounds,
            separable_f,
            spatial_vars: spatial,
            generator_vars: generator,
        })
    }

    pub fn spatial_vars(&self) -> &VarSet {
        &self.spatial_vars
    }

    pub fn generator_vars(&self) -> &VarSet {
        &self.generator_vars
    }

    /// True when no coefficient (including `f`) references `x1`; averaging is
    /// then the identity on this problem.
    pub fn is_x1_free(&self) -> bool {
        let slot = self.spatial_vars.slot("x1").expect("x1 is always declared");
        let fslot = self.generator_vars.slot("x1").expect("x1 is always declared");
        !self.phi.iter().any(|e| e.references_slot(slot))
            && !self.b_tilde.iter().any(|e| e.references_slot(slot))
            && !self
                .sigma_tilde
                .iter()
                .any(|row| row.iter().any(|e| e.references_slot(slot)))
            && !self.f.references_slot(fslot)
    }

    /// Evaluates the generator `f` at physical arguments.
    pub fn eval_f(&self, x1: f64, x2: &[f64], y: f64, z: &[f64]) -> Result<f64, EvalError> {
        debug_assert_eq!(x2.len(), self.d);
        debug_assert_eq!(z.len(), self.d + 1);
        let mut env = Vec::with_capacity(1 + self.d + 1 + self.d + 1);
        env.push(x1);
        env.extend_from_slice(x2);
        env.push(y);
        env.extend_from_slice(z);
        self.f.eval(&env)
    }

    /// Evaluates the terminal/initial datum `H`.
    pub fn eval_h(&self, x1: f64, x2: &[f64]) -> Result<f64, EvalError> {
        let mut env = Vec::with_capacity(1 + self.d);
        env.push(x1);
        env.extend_from_slice(x2);
        self.h.eval(&env)
    }

    /// Evaluates the forward coefficients into `buf` without allocating.
    pub fn eval_coefficients_into(
        &self,
        x1: f64,
        x2: &[f64],
        buf: &mut CoefficientBuf,
    ) -> Result<(), EvalError> {
        let d = self.d;
        let k = self.k;
        let n = d + 1;
        buf.resize(d, k);
        buf.env.clear();
        buf.env.push(x1);
        buf.env.extend_from_slice(x2);

        // sigma stacks phi over sigma_tilde: row 0 is phi, rows 1..=d are
        // sigma_tilde.
        for (j, e) in self.phi.iter().enumerate() {
            buf.sigma[j] = e.eval(&buf.env)?;
        }
        for (i, row) in self.sigma_tilde.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                buf.sigma[(i + 1) * k + j] = e.eval(&buf.env)?;
            }
        }
        buf.b[0] = 0.0;
        for (i, e) in self.b_tilde.iter().enumerate() {
            buf.b[i + 1] = e.eval(&buf.env)?;
        }
        // a = (1/2) sigma sigma*
        for i in 0..n {
            for j in 0..=i {
                let mut s = 0.0;
                for m in 0..k {
                    s += buf.sigma[i * k + m] * buf.sigma[j * k + m];
                }
                let v = 0.5 * s;
                buf.a[i * n + j] = v;
                buf.a[j * n + i] = v;
            }
        }
        buf.a00 = buf.a[0];
        // rho may be infinite when a00 degenerates to 0; validation reports
        // that as an ellipticity failure rather than a domain error.
        buf.rho = 1.0 / buf.a00;
        Ok(())
    }

    /// Allocating convenience wrapper around [`eval_coefficients_into`].
    pub fn eval_coefficients(
        &self,
        x1: f64,
        x2: &[f64],
    ) -> Result<CoefficientBuf, EvalError> {
        let mut buf = CoefficientBuf::new(self.d, self.k);
        self.eval_coefficients_into(x1, x2, &mut buf)?;
        Ok(buf)
    }
}

/// Forward coefficient values at one point: `sigma` ((d+1) x k, row-major),
/// `a = (1/2) sigma sigma*` ((d+1)^2), `b` (first component always 0),
/// `a00`, `rho = 1/a00`.
#[derive(Debug, Clone, Default)]
pub struct CoefficientBuf {
    pub d: usize,
    pub k: usize,
    pub sigma: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub a00: f64,
    pub rho: f64,
    env: Vec<f64>,
}

impl CoefficientBuf {
    pub fn new(d: usize, k: usize) -> CoefficientBuf {
        let mut buf = CoefficientBuf::default();
        buf.resize(d, k);
        buf
    }

    fn resize(&mut self, d: usize, k: usize) {
        let n = d + 1;
        self.d = d;
        self.k = k;
        self.sigma.resize(n * k, 0.0);
        self.a.resize(n * n, 0.0);
        self.b.resize(n, 0.0);
    }

    pub fn a_at(&self, i: usize, j: usize) -> f64 {
        self.a[i * (self.d + 1) + j]
    }
}

// ---------------------------------------------------------------------------
// Sampled validation of assumptions (A2) and (C1)
// ---------------------------------------------------------------------------

/// Sampling region for validation. Coefficients are probed on
/// `x1_range x x2_range^d`; the generator additionally on `y_range` and
/// `z_range^(d+1)`.
#[derive(Debug, Clone)]
pub struct SampleBox {
    pub x1_range: (f64, f64),
    pub x2_range: (f64, f64),
    pub y_range: (f64, f64),
    pub z_range: (f64, f64),
}

impl Default for SampleBox {
    fn default() -> Self {
        SampleBox {
            x1_range: (-50.0, 50.0),
            x2_range: (-5.0, 5.0),
            y_range: (-5.0, 5.0),
            z_range: (-5.0, 5.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub n_samples: usize,
    /// Minimum of `xi* a xi` over sampled points and unit directions.
    pub min_ellipticity: f64,
    /// Maximum of `a00`.
    pub max_a00: f64,
    /// Maximum of `sum_i (a_tilde_ii + b_i^2) / (1 + |x2|^2)`.
    pub max_growth_ratio: f64,
    /// Maximum of `|f| / (1 + |x2|^p + |y| + |z|)`.
    pub max_f_growth_ratio: f64,
    /// Maximum sampled difference quotient of `f` in `(y, z)`.
    pub max_f_lipschitz: f64,
    pub ellipticity_ok: bool,
    pub a2_ok: bool,
    pub c1_ok: bool,
    /// First offending sample point, if any check failed.
    pub offending_point: Option<Vec<f64>>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.ellipticity_ok && self.a2_ok && self.c1_ok
    }
}

pub fn validate(
    spec: &ProblemSpec,
    sample_box: &SampleBox,
    n_samples: usize,
    seed: u64,
) -> Result<ValidationReport, ProblemError> {
    if n_samples == 0 {
        return Err(ProblemError::Structure("n_samples must be >= 1".into()));
    }
    let d = spec.d;
    let n = d + 1;
    let mut rng = crate::rng::SampleRng::new(seed);
    let mut buf = CoefficientBuf::new(d, spec.k);

    let mut min_ellipticity = f64::INFINITY;
    let mut max_a00 = f64::NEG_INFINITY;
    let mut max_growth_ratio = f64::NEG_INFINITY;
    let mut max_f_growth = f64::NEG_INFINITY;
    let mut max_f_lip = f64::NEG_INFINITY;
    let mut offending: Option<Vec<f64>> = None;
    let b = &spec.bounds;

    for _ in 0..n_samples {
        let x1 = rng.uniform(sample_box.x1_range.0, sample_box.x1_range.1);
        let x2: Vec<f64> = (0..d)
            .map(|_| rng.uniform(sample_box.x2_range.0, sample_box.x2_range.1))
            .collect();
        spec.eval_coefficients_into(x1, &x2, &mut buf)
            .map_err(|source| ProblemError::Eval { name: "coefficients".into(), source })?;

        let xi = rng.unit_vector(n);
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += xi[i] * buf.a[i * n + j] * xi[j];
            }
        }
        let x2_sq: f64 = x2.iter().map(|v| v * v).sum();
        let mut growth = 0.0;
        for i in 1..n {
            growth += buf.a[i * n + i] + buf.b[i] * buf.b[i];
        }
        let growth_ratio = growth / (1.0 + x2_sq);

        // (C1): growth and difference quotients of f in (y, z).
        let y = rng.uniform(sample_box.y_range.0, sample_box.y_range.1);
        let z: Vec<f64> = (0..n)
            .map(|_| rng.uniform(sample_box.z_range.0, sample_box.z_range.1))
            .collect();
        let fv = spec
            .eval_f(x1, &x2, y, &z)
            .map_err(|source| ProblemError::Eval { name: "f".into(), source })?;
        let z_norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let denom = 1.0 + x2_sq.sqrt().powi(b.p_growth as i32) + y.abs() + z_norm;
        let f_growth = fv.abs() / denom;

        let y2 = rng.uniform(sample_box.y_range.0, sample_box.y_range.1);
        let z2: Vec<f64> = (0..n)
            .map(|_| rng.uniform(sample_box.z_range.0, sample_box.z_range.1))
            .collect();
        let fv2 = spec
            .eval_f(x1, &x2, y2, &z2)
            .map_err(|source| ProblemError::Eval { name: "f".into(), source })?;
        let dz = z
            .iter()
            .zip(&z2)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let df_denom = (y - y2).abs() + dz;
        let f_lip = if df_denom > 1e-9 { (fv - fv2).abs() / df_denom } else { 0.0 };

        min_ellipticity = min_ellipticity.min(quad);
        max_a00 = max_a00.max(buf.a00);
        max_growth_ratio = max_growth_ratio.max(growth_ratio);
        max_f_growth = max_f_growth.max(f_growth);
        max_f_lip = max_f_lip.max(f_lip);

        let point_ok = quad >= b.lambda
            && buf.a00 <= b.c1
            && growth_ratio <= b.c1
            && f_growth <= b.k_lip
            && f_lip <= b.k_lip;
        if !point_ok && offending.is_none() {
            let mut pt = vec![x1];
            pt.extend_from_slice(&x2);
            offending = Some(pt);
        }
    }

    Ok(ValidationReport {
        n_samples,
        min_ellipticity,
        max_a00,
        max_growth_ratio,
        max_f_growth_ratio: max_f_growth,
        max_f_lipschitz: max_f_lip,
        ellipticity_ok: min_ellipticity >= b.lambda,
        a2_ok: max_a00 <= b.c1 && max_growth_ratio <= b.c1,
        c1_ok: max_f_growth <= b.k_lip && max_f_lip <= b.k_lip,
        offending_point: offending,
    })
}

// ---------------------------------------------------------------------------
// Problem definition files (TOML)
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct ProblemFile {
    d: usize,
    k: usize,
    phi: Vec<String>,
    b_tilde: Vec<String>,
    sigma_tilde: Vec<Vec<String>>,
    f: String,
    #[serde(alias = "H")]
    h: String,
    lambda: f64,
    #[serde(alias = "C1")]
    c1: f64,
    #[serde(alias = "K")]
    k_lip: f64,
    p: u32,
}

impl ProblemSpec {
    /// Loads a problem definition from the flat key/value TOML format:
    /// `d`, `k`, `phi = [..]`, `b_tilde = [..]`, `sigma_tilde = [[..]]`,
    /// `f`, `H`, `lambda`, `C1`, `K`, `p`.
    pub fn from_toml_str(text: &str) -> Result<ProblemSpec, ProblemError> {
        let file: ProblemFile =
            toml::from_str(text).map_err(|e| ProblemError::File(e.to_string()))?;
        let phi: Vec<&str> = file.phi.iter().map(String::as_str).collect();
        let b_tilde: Vec<&str> = file.b_tilde.iter().map(String::as_str).collect();
        let sigma_rows: Vec<Vec<&str>> = file
            .sigma_tilde
            .iter()
            .map(|row| row.iter().map(String::as_str).collect())
            .collect();
        let sigma_refs: Vec<&[&str]> = sigma_rows.iter().map(Vec::as_slice).collect();
        ProblemSpec::from_sources(
            file.d,
            file.k,
            &phi,
            &b_tilde,
            &sigma_refs,
            &file.f,
            &file.h,
            Bounds {
                lambda: file.lambda,
                c1: file.c1,
                k_lip: file.k_lip,
                p_growth: file.p,
            },
            None,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bm3_constant_rho() {
        let spec = registry(BenchmarkId::Bm3X1Free);
        for x1 in [-3.0, 0.0, 7.5] {
            let c = spec.eval_coefficients(x1, &[0.4]).unwrap();
            assert_eq!(c.a00, 0.5);
            assert_eq!(c.rho, 2.0);
        }
        assert!(spec.is_x1_free());
    }

    #[test]
    fn bm1_rho_at_origin() {
        // a00 = 1/(2 + tanh 0) = 1/2, rho = 2 (hand-check scalar oracle).
        let spec = registry(BenchmarkId::Bm1TanhFast);
        let c = spec.eval_coefficients(0.0, &[0.0]).unwrap();
        assert!((c.a00 - 0.5).abs() < 1e-15, "a00 = {}", c.a00);
        assert!((c.rho - 2.0).abs() < 1e-14, "rho = {}", c.rho);
        assert!(!spec.is_x1_free());
    }

    #[test]
    fn drift_first_component_is_zero() {
        for id in BenchmarkId::all() {
            let spec = registry(id);
            let c = spec.eval_coefficients(1.3, &[-0.7]).unwrap();
            assert_eq!(c.b[0], 0.0);
        }
    }

    #[test]
    fn a_is_symmetric_at_sampled_points() {
        let spec = registry(BenchmarkId::Bm1TanhFast);
        let mut rng = crate::rng::SampleRng::new(11);
        for _ in 0..100 {
            let x1 = rng.uniform(-20.0, 20.0);
            let x2 = rng.uniform(-5.0, 5.0);
            let c = spec.eval_coefficients(x1, &[x2]).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    assert_eq!(c.a_at(i, j).to_bits(), c.a_at(j, i).to_bits());
                }
            }
        }
    }

    #[test]
    fn registered_benchmarks_validate_with_registry_bounds() {
        for id in BenchmarkId::all() {
            let spec = registry(id);
            let report = validate(&spec, &SampleBox::default(), 2000, 7).unwrap();
            assert!(report.passed(), "{}: {report:?}", id.name());
        }
    }

    #[test]
    fn bm3_ellipticity_matches_closed_form_eigenvalues() {
        // a = diag(1/2, 1/2): both eigenvalues of the constant matrix are 1/2
        // (closed-form 2x2 eigensolver: trace/2 +- sqrt((tr/2)^2 - det) with
        // tr = 1, det = 1/4), so the sampled minimum must approach 1/2 and
        // certainly stay above lambda = 0.25.
        let spec = registry(BenchmarkId::Bm3X1Free);
        let report = validate(&spec, &SampleBox::default(), 500, 3).unwrap();
        let tr_half = 0.5_f64;
        let det = 0.25_f64;
        let lam_min = tr_half - (tr_half * tr_half - det).max(0.0).sqrt();
        assert!((report.min_ellipticity - lam_min).abs() < 1e-9);
        assert!(report.ellipticity_ok);
    }

    #[test]
    fn zero_diffusion_fails_ellipticity() {
        let spec = ProblemSpec::from_sources(
            1,
            2,
            &["0", "0"],
            &["0"],
            &[&["0", "0"]],
            "0",
            "0",
            Bounds { lambda: 0.25, c1: 2.0, k_lip: 2.0, p_growth: 1 },
            None,
        )
        .unwrap();
        let report = validate(&spec, &SampleBox::default(), 100, 5).unwrap();
        assert!(!report.ellipticity_ok);
        assert!(report.offending_point.is_some());
    }

    #[test]
    fn bm1_with_understated_lipschitz_bound_fails_c1() {
        let mut spec = registry(BenchmarkId::Bm1TanhFast);
        // True Lipschitz constant in (y, z) is >= 1 (the -y term); claim 0.2.
        spec.bounds.k_lip = 0.2;
        let report = validate(&spec, &SampleBox::default(), 2000, 9).unwrap();
        assert!(!report.c1_ok, "{report:?}");
        assert!(report.max_f_lipschitz > 0.2);
    }

    #[test]
    fn bm1_separable_decomposition_matches_f() {
        let spec = registry(BenchmarkId::Bm1TanhFast);
        let sep = spec.separable_f.as_ref().expect("BM1 records the separable flag");
        let mut rng = crate::rng::SampleRng::new(21);
        for _ in 0..1000 {
            let x1 = rng.uniform(-10.0, 10.0);
            let x2 = [rng.uniform(-5.0, 5.0)];
            let y = rng.uniform(-5.0, 5.0);
            let z = [rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0)];
            let direct = spec.eval_f(x1, &x2, y, &z).unwrap();
            let split = sep.eval(x1, &x2, y, &z).unwrap();
            assert!((direct - split).abs() <= 1e-12 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn problem_file_round_trip() {
        let text = r#"
            d = 1
            k = 2
            phi = ["sqrt(2/(2+tanh(x1)))", "0"]
            b_tilde = ["tanh(x1)"]
            sigma_tilde = [["0", "1"]]
            f = "tanh(x1)*cos(x2_1) - y + 0.5*z_1"
            H = "exp(-x1^2 - x2_1^2)"
            lambda = 0.25
            C1 = 2.0
            K = 2.0
            p = 2
        "#;
        let spec = ProblemSpec::from_toml_str(text).unwrap();
        let reference = registry(BenchmarkId::Bm1TanhFast);
        let a = spec.eval_coefficients(0.7, &[0.3]).unwrap();
        let b = reference.eval_coefficients(0.7, &[0.3]).unwrap();
        assert_eq!(a.a00.to_bits(), b.a00.to_bits());
        assert!(ProblemSpec::from_toml_str("d = 1").is_err());
    }

    #[test]
    fn k_must_be_d_plus_one() {
        let err = ProblemSpec::from_sources(
            1,
            3,
            &["1", "0", "0"],
            &["0"],
            &[&["0", "1", "0"]],
            "0",
            "0",
            Bounds { lambda: 0.1, c1: 1.0, k_lip: 1.0, p_growth: 1 },
            None,
        )
        .unwrap_err();
        assert!(matches!(err, ProblemError::Structure(_)));
    }
}
