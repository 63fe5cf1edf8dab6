//! Cesaro limits and the averaged (effective) model.
//!
//! For a coefficient g the directional averages are the limits of
//! `(1/X) int_0^X g(t, x2) dt` as `X -> +inf` and `-inf`. The effective
//! coefficients are rho-weighted quotients of such limits,
//!
//! ```text
//! bbar_i = (rho b_i)^pm / rho^pm,   abar_ij = (rho a_ij)^pm / rho^pm,
//! fbar(x, y, z) = (rho f)^pm(x, y, z) / rho^pm(x),
//! ```
//!
//! taking the `+` branch for `x1 > 0` and the `-` branch for `x1 <= 0`; the
//! averaged model may therefore jump across `x1 = 0`. Limits are realized
//! numerically: probe abscissas grow geometrically and the running average
//! accepts once two consecutive increments fall below a tolerance.

use crate::coeffex::EvalError;
use crate::linalg;
use crate::problem::{CoefficientBuf, ProblemSpec};
use dashmap::DashMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Plus,
    Minus,
}

/// Which side of the discontinuity applies at `x1`: ties at `x1 = 0` go to
/// the minus branch.
pub fn branch(x1: f64) -> Direction {
    if x1 > 0.0 {
        Direction::Plus
    } else {
        Direction::Minus
    }
}

/// Numerical controls for the limit probe and the evaluation lattice.
#[derive(Debug, Clone)]
pub struct AveragingControl {
    /// First probe abscissa.
    pub x0: f64,
    /// Geometric growth factor of the probe ladder.
    pub growth: f64,
    /// Ladder length before giving up.
    pub j_max: u32,
    /// Stabilization tolerance on consecutive increments.
    pub tol: f64,
    /// Base quadrature resolution; panels refine adaptively from here.
    pub quad_points_per_unit: f64,
    /// Half-width of the x2 evaluation lattice.
    pub lattice_halfwidth: f64,
    /// Lattice pitch (linear interpolation between nodes).
    pub lattice_pitch: f64,
}

impl Default for AveragingControl {
    fn default() -> Self {
        AveragingControl {
            x0: 64.0,
            growth: 2.0,
            j_max: 24,
            tol: 1e-4,
            quad_points_per_unit: 8.0,
            lattice_halfwidth: 8.0,
            lattice_pitch: 0.05,
        }
    }
}

#[derive(Debug, Error)]
pub enum CesaroError {
    #[error("cesaro average of `{coefficient}` did not stabilize (last increment {residual:.3e}); assumption (B) likely violated")]
    NonStabilizing { coefficient: String, residual: f64 },
    #[error("domain error while averaging `{coefficient}`: {source}")]
    Domain {
        coefficient: String,
        #[source]
        source: EvalError,
    },
    #[error("2*abar not positive definite at x2 = {x2}: {detail}")]
    FactorizationFailure { x2: f64, detail: String },
    #[error("averaged-model lattice only supports d = 1 (got d = {0})")]
    UnsupportedDimension(usize),
}

/// Cesaro limit of a scalar function along one ray.
///
/// Returns `(limit, residual)` where the limit is the running average at the
/// first ladder rung preceded by two consecutive increments below `ctl.tol`,
/// and the residual is the last increment.
pub fn cesaro_limit<F>(
    mut g: F,
    direction: Direction,
    ctl: &AveragingControl,
) -> Result<(f64, f64), CesaroError>
where
    F: FnMut(f64) -> Result<f64, EvalError>,
{
    let name = "<anonymous>";
    cesaro_limit_named(&mut g, direction, ctl, name)
}

fn cesaro_limit_named<F>(
    g: &mut F,
    direction: Direction,
    ctl: &AveragingControl,
    coefficient: &str,
) -> Result<(f64, f64), CesaroError>
where
    F: FnMut(f64) -> Result<f64, EvalError>,
{
    // The minus-direction average of g(t) equals the plus-direction average
    // of g(-t); integrate on the positive ray either way.
    let sign = match direction {
        Direction::Plus => 1.0,
        Direction::Minus => -1.0,
    };
    let mut eval = |t: f64| -> Result<f64, CesaroError> {
        g(sign * t).map_err(|source| CesaroError::Domain {
            coefficient: coefficient.to_owned(),
            source,
        })
    };

    let mut x_hi = ctl.x0;
    let mut integral = adaptive_panel(&mut eval, 0.0, x_hi, ctl)?;
    let mut prev_avg = integral / x_hi;
    let mut consecutive_small = 0u32;
    let mut last_increment = f64::INFINITY;

    for _ in 0..ctl.j_max {
        let x_next = x_hi * ctl.growth;
        integral += adaptive_panel(&mut eval, x_hi, x_next, ctl)?;
        x_hi = x_next;
        let avg = integral / x_hi;
        last_increment = (avg - prev_avg).abs();
        prev_avg = avg;
        if last_increment < ctl.tol {
            consecutive_small += 1;
            if consecutive_small >= 2 {
                return Ok((avg, last_increment));
            }
        } else {
            consecutive_small = 0;
        }
    }
    Err(CesaroError::NonStabilizing {
        coefficient: coefficient.to_owned(),
        residual: last_increment,
    })
}

/// Composite Simpson on `[a, b]`, refined by doubling until the panel value
/// settles relative to the tolerance's contribution to the running average.
fn adaptive_panel<F>(
    eval: &mut F,
    a: f64,
    b: f64,
    ctl: &AveragingControl,
) -> Result<f64, CesaroError>
where
    F: FnMut(f64) -> Result<f64, CesaroError>,
{
    const MAX_INTERVALS: usize = 1 << 22;
    let width = b - a;
    let mut n = ((width * ctl.quad_points_per_unit).ceil() as usize).clamp(8, MAX_INTERVALS);
    n += n % 2;
    // Error allowance for this panel as a contribution to (1/b) * integral.
    let allow = 0.02 * ctl.tol * b;
    let mut prev = simpson(eval, a, b, n)?;
    while n < MAX_INTERVALS {
        n *= 2;
        let cur = simpson(eval, a, b, n)?;
        if (cur - prev).abs() <= allow {
            return Ok(cur);
        }
        prev = cur;
    }
    Ok(prev)
}

fn simpson<F>(eval: &mut F, a: f64, b: f64, n: usize) -> Result<f64, CesaroError>
where
    F: FnMut(f64) -> Result<f64, CesaroError>,
{
    debug_assert!(n % 2 == 0);
    let h = (b - a) / n as f64;
    let mut sum = eval(a)? + eval(b)?;
    let mut odd = 0.0;
    let mut even = 0.0;
    for i in 1..n {
        let v = eval(a + i as f64 * h)?;
        if i % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    sum += 4.0 * odd + 2.0 * even;
    Ok(sum * h / 3.0)
}

// ---------------------------------------------------------------------------
// Averaged model
// ---------------------------------------------------------------------------

/// Quantization used for the on-demand fbar memo keys; exact for separable
/// benchmarks, approximate otherwise.
const FBAR_MEMO_QUANTUM: f64 = 1e-3;

#[derive(Debug, Clone, Default)]
struct BranchTables {
    rho: Vec<f64>,
    /// Effective slow drift (component 1; component 0 is structurally zero).
    bbar: Vec<f64>,
    /// Effective diffusion entries a00, a01, a11 per lattice node.
    abar00: Vec<f64>,
    abar01: Vec<f64>,
    abar11: Vec<f64>,
    /// `(rho g)^pm / rho^pm` for the separable generator fast factor.
    gbar: Vec<f64>,
}

/// The effective model of the averaged system: lattice tables for the
/// forward coefficients, the separable fast path or an on-demand memoized
/// Cesaro evaluator for `fbar`, and the identity fast path for problems
/// whose coefficients never read `x1`.
pub struct AveragedModel {
    spec: ProblemSpec,
    ctl: AveragingControl,
    identity: bool,
    x2_nodes: Vec<f64>,
    plus: BranchTables,
    minus: BranchTables,
    /// Largest stabilization residual seen while building the tables.
    pub max_residual: f64,
    fbar_memo: DashMap<(u8, i64, i64, i64, i64), f64>,
}

impl AveragedModel {
    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn control(&self) -> &AveragingControl {
        &self.ctl
    }

    /// True when averaging is the identity on this problem (no coefficient
    /// reads `x1`); evaluators then delegate to the raw coefficients so the
    /// averaged solves match the direct ones bitwise.
    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn x2_nodes(&self) -> &[f64] {
        &self.x2_nodes
    }

    fn tables(&self, dir: Direction) -> &BranchTables {
        match dir {
            Direction::Plus => &self.plus,
            Direction::Minus => &self.minus,
        }
    }

    fn interp(table: &[f64], nodes: &[f64], x2: f64) -> f64 {
        let n = nodes.len();
        if n == 1 || x2 <= nodes[0] {
            return table[0];
        }
        if x2 >= nodes[n - 1] {
            return table[n - 1];
        }
        let pitch = nodes[1] - nodes[0];
        let idx = ((x2 - nodes[0]) / pitch).floor() as usize;
        let idx = idx.min(n - 2);
        let w = (x2 - nodes[idx]) / pitch;
        table[idx] * (1.0 - w) + table[idx + 1] * w
    }

    pub fn rho(&self, dir: Direction, x2: f64) -> f64 {
        if self.identity {
            // x1-free: rho is the raw pointwise value.
            let c = self.spec.eval_coefficients(0.0, &[x2]).expect("identity rho");
            return c.rho;
        }
        Self::interp(&self.tables(dir).rho, &self.x2_nodes, x2)
    }

    /// Effective drift at `x = (x1, x2)`; `out` has length 2.
    pub fn bbar_into(&self, x1: f64, x2: f64, out: &mut [f64]) {
        if self.identity {
            let mut buf = CoefficientBuf::new(1, 2);
            self.spec
                .eval_coefficients_into(x1, &[x2], &mut buf)
                .expect("identity bbar");
            out[..2].copy_from_slice(&buf.b);
            return;
        }
        let t = self.tables(branch(x1));
        out[0] = 0.0;
        out[1] = Self::interp(&t.bbar, &self.x2_nodes, x2);
    }

    /// Effective diffusion matrix entries `(a00, a01, a11)` at `x`.
    pub fn abar_at(&self, x1: f64, x2: f64) -> (f64, f64, f64) {
        if self.identity {
            let c = self.spec.eval_coefficients(x1, &[x2]).expect("identity abar");
            return (c.a_at(0, 0), c.a_at(0, 1), c.a_at(1, 1));
        }
        let t = self.tables(branch(x1));
        (
            Self::interp(&t.abar00, &self.x2_nodes, x2),
            Self::interp(&t.abar01, &self.x2_nodes, x2),
            Self::interp(&t.abar11, &self.x2_nodes, x2),
        )
    }

    /// Lower-triangular factor with positive diagonal of `2*abar(x)`,
    /// row-major 2x2 in `out`.
    pub fn sigbar_into(&self, x1: f64, x2: f64, out: &mut [f64]) -> Result<(), CesaroError> {
        if self.identity {
            // sigma itself already satisfies sigma sigma* = 2a; reuse it so
            // averaged simulations match direct ones bitwise.
            let mut buf = CoefficientBuf::new(1, 2);
            self.spec
                .eval_coefficients_into(x1, &[x2], &mut buf)
                .expect("identity sigbar");
            out[..4].copy_from_slice(&buf.sigma);
            return Ok(());
        }
        let (a00, a01, a11) = self.abar_at(x1, x2);
        let m = [2.0 * a00, 2.0 * a01, 2.0 * a01, 2.0 * a11];
        linalg::cholesky_lower_2x2(&m, out).map_err(|detail| {
            CesaroError::FactorizationFailure { x2, detail }
        })
    }

    /// Effective generator. Separable problems use the precomputed fast
    /// factor; otherwise an on-demand Cesaro limit of
    /// `t -> rho(t, x2) f(t, x2, y, z)`, memoized on quantized keys.
    pub fn fbar(&self, x1: f64, x2: f64, y: f64, z: &[f64]) -> Result<f64, CesaroError> {
        if self.identity {
            return self
                .spec
                .eval_f(x1, &[x2], y, z)
                .map_err(|source| CesaroError::Domain { coefficient: "f".into(), source });
        }
        let dir = branch(x1);
        if let Some(sep) = &self.spec.separable_f {
            let t = self.tables(dir);
            let gbar = Self::interp(&t.gbar, &self.x2_nodes, x2);
            let h = sep
                .h_slow
                .eval(&[x2])
                .map_err(|source| CesaroError::Domain { coefficient: "separable.h".into(), source })?;
            let ell = sep
                .ell
                .eval(&[y, z[0], z[1]])
                .map_err(|source| CesaroError::Domain { coefficient: "separable.ell".into(), source })?;
            return Ok(gbar * h + ell);
        }
        let quant = |v: f64| (v / FBAR_MEMO_QUANTUM).round() as i64;
        let key = (
            matches!(dir, Direction::Plus) as u8,
            quant(x2),
            quant(y),
            quant(z[0]),
            quant(z[1]),
        );
        if let Some(hit) = self.fbar_memo.get(&key) {
            return Ok(*hit);
        }
        let spec = &self.spec;
        let mut buf = CoefficientBuf::new(spec.d, spec.k);
        let (rho_f, _) = cesaro_limit_named(
            &mut |t: f64| {
                spec.eval_coefficients_into(t, &[x2], &mut buf)?;
                let fv = spec.eval_f(t, &[x2], y, z)?;
                Ok(buf.rho * fv)
            },
            dir,
            &self.ctl,
            "rho*f",
        )?;
        let value = rho_f / self.rho(dir, x2);
        self.fbar_memo.insert(key, value);
        Ok(value)
    }

    /// Writes the lattice tables as CSV: one row per x2 node with the plus
    /// and minus effective coefficients.
    pub fn tables_csv(&self) -> String {
        let mut out = String::from(
            "x2,rho_plus,rho_minus,bbar_plus_1,bbar_minus_1,abar_plus_00,abar_plus_01,abar_plus_11,abar_minus_00,abar_minus_01,abar_minus_11\n",
        );
        for (i, &x2) in self.x2_nodes.iter().enumerate() {
            if self.identity {
                let c = self.spec.eval_coefficients(0.0, &[x2]).expect("identity row");
                let row = format!(
                    "{x2},{r},{r},{b},{b},{a00},{a01},{a11},{a00},{a01},{a11}\n",
                    r = c.rho,
                    b = c.b[1],
                    a00 = c.a_at(0, 0),
                    a01 = c.a_at(0, 1),
                    a11 = c.a_at(1, 1),
                );
                out.push_str(&row);
            } else {
                let p = &self.plus;
                let m = &self.minus;
                out.push_str(&format!(
                    "{x2},{},{},{},{},{},{},{},{},{},{}\n",
                    p.rho[i],
                    m.rho[i],
                    p.bbar[i],
                    m.bbar[i],
                    p.abar00[i],
                    p.abar01[i],
                    p.abar11[i],
                    m.abar00[i],
                    m.abar01[i],
                    m.abar11[i],
                ));
            }
        }
        out
    }
}

/// Builds the averaged model for a validated problem. The evaluation lattice
/// and interpolation support `d = 1` (the desk-scale benchmarks).
pub fn build_averaged_model(
    spec: &ProblemSpec,
    ctl: &AveragingControl,
) -> Result<AveragedModel, CesaroError> {
    if spec.d != 1 {
        return Err(CesaroError::UnsupportedDimension(spec.d));
    }
    let n_nodes = (2.0 * ctl.lattice_halfwidth / ctl.lattice_pitch).round() as usize + 1;
    let x2_nodes: Vec<f64> = (0..n_nodes)
        .map(|i| -ctl.lattice_halfwidth + i as f64 * ctl.lattice_pitch)
        .collect();

    let identity = spec.is_x1_free();
    let mut model = AveragedModel {
        spec: spec.clone(),
        ctl: ctl.clone(),
        identity,
        x2_nodes,
        plus: BranchTables::default(),
        minus: BranchTables::default(),
        max_residual: 0.0,
        fbar_memo: DashMap::new(),
    };
    if identity {
        return Ok(model);
    }

    // Whether the fast-direction averages depend on x2 at all; when they do
    // not, one limit per direction fills the whole table.
    let x1_slot = 0usize;
    let _ = x1_slot;
    let spatial = spec.spatial_vars();
    let x2_slot = spatial.slot("x2_1").expect("d = 1");
    let phi_x2 = spec.phi.iter().any(|e| e.references_slot(x2_slot));
    let b_x2 = spec.b_tilde.iter().any(|e| e.references_slot(x2_slot));
    let sig_x2 = spec
        .sigma_tilde
        .iter()
        .any(|r| r.iter().any(|e| e.references_slot(x2_slot)));
    let forward_x2_free = !(phi_x2 || b_x2 || sig_x2);
    let sep_g_x2_free = true; // separable g is an expression over x1 only

    let mut max_residual = 0.0f64;
    for dir in [Direction::Plus, Direction::Minus] {
        let mut tables = BranchTables::default();
        let nodes: Vec<f64> = if forward_x2_free {
            vec![model.x2_nodes[0]]
        } else {
            model.x2_nodes.clone()
        };
        let mut buf = CoefficientBuf::new(spec.d, spec.k);
        for &x2 in &nodes {
            let mut limit = |name: &str,
                             pick: &dyn Fn(&CoefficientBuf) -> f64|
             -> Result<f64, CesaroError> {
                let (v, r) = cesaro_limit_named(
                    &mut |t: f64| {
                        spec.eval_coefficients_into(t, &[x2], &mut buf)?;
                        Ok(pick(&buf))
                    },
                    dir,
                    ctl,
                    name,
                )?;
                max_residual = max_residual.max(r);
                Ok(v)
            };
            let rho = limit("rho", &|c| c.rho)?;
            let rho_b = limit("rho*b_tilde_1", &|c| c.rho * c.b[1])?;
            let rho_a00 = limit("rho*a00", &|c| c.rho * c.a_at(0, 0))?;
            let rho_a01 = limit("rho*a01", &|c| c.rho * c.a_at(0, 1))?;
            let rho_a11 = limit("rho*a11", &|c| c.rho * c.a_at(1, 1))?;
            tables.rho.push(rho);
            tables.bbar.push(rho_b / rho);
            tables.abar00.push(rho_a00 / rho);
            tables.abar01.push(rho_a01 / rho);
            tables.abar11.push(rho_a11 / rho);
        }
        if let Some(sep) = &spec.separable_f {
            let nodes_g: Vec<f64> = if sep_g_x2_free && forward_x2_free {
                vec![model.x2_nodes[0]]
            } else if sep_g_x2_free {
                // rho may still vary with x2 even when g does not.
                model.x2_nodes.clone()
            } else {
                model.x2_nodes.clone()
            };
            let mut buf2 = CoefficientBuf::new(spec.d, spec.k);
            for (i, &x2) in nodes_g.iter().enumerate() {
                let (rho_g, r) = cesaro_limit_named(
                    &mut |t: f64| {
                        spec.eval_coefficients_into(t, &[x2], &mut buf2)?;
                        let g = sep.g_fast.eval(&[t])?;
                        Ok(buf2.rho * g)
                    },
                    dir,
                    ctl,
                    "rho*separable.g",
                )?;
                max_residual = max_residual.max(r);
                let rho = if tables.rho.len() == 1 { tables.rho[0] } else { tables.rho[i] };
                tables.gbar.push(rho_g / rho);
            }
        }
        // Broadcast constant tables across the lattice.
        let n = model.x2_nodes.len();
        for table in [
            &mut tables.rho,
            &mut tables.bbar,
            &mut tables.abar00,
            &mut tables.abar01,
            &mut tables.abar11,
            &mut tables.gbar,
        ] {
            if table.len() == 1 && n > 1 {
                let v = table[0];
                table.resize(n, v);
            }
        }
        match dir {
            Direction::Plus => model.plus = tables,
            Direction::Minus => model.minus = tables,
        }
    }
    model.max_residual = max_residual;

    // Factorization sanity across the lattice; a failure here means an
    // averaging bug, never expected under validated input.
    let mut sig = [0.0f64; 4];
    for &x2 in &model.x2_nodes.clone() {
        model.sigbar_into(1.0, x2, &mut sig)?;
        model.sigbar_into(-1.0, x2, &mut sig)?;
    }
    Ok(model)
}
