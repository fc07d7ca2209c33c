//! Run configuration: one TOML file describing a whole problem, with
//! command-line flags layered on top. Every section has defaults except
//! `[matrix]`, which must come from the file or from the matrix flags.
//!
//! Unknown keys are rejected rather than ignored, so a typo in a config
//! fails loudly instead of silently running the default.

use serde::{Deserialize, Serialize};

use rdcert_core::lyapunov::LyapunovPolynomial;
use rdcert_core::reaction::{AuditConfig, ReactionKind, ReactionSpec};
use rdcert_core::regions::RegionSpec;
use rdcert_core::simulate::{
    BoundarySpec, GridSpec, InitialData, Scheme, SimSetup,
};
use rdcert_core::spectral::ToeplitzDiffusion;
use rdcert_core::{certificate::SearchBudget, expr, linalg::DMat};

use crate::AppError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixConfig>,
    pub region: RegionConfig,
    pub polynomial: PolynomialConfig,
    pub reaction: ReactionConfig,
    pub grid: GridConfig,
    pub boundary: BoundaryConfig,
    pub initial: InitialConfig,
    pub time: TimeConfig,
    pub audit: AuditSection,
    pub search: SearchConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    pub m: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegionConfig {
    /// Sign pattern such as `"++-"`; empty means all `+`.
    pub signs: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolynomialConfig {
    pub degree: usize,
    /// Coupling weights; a single value is broadcast to all m-1 gaps.
    pub theta: Vec<f64>,
}

impl Default for PolynomialConfig {
    fn default() -> Self {
        PolynomialConfig {
            degree: 2,
            theta: vec![1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReactionKindConfig {
    Zero,
    Lotka,
    Quadratic,
    Expressions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReactionConfig {
    pub kind: ReactionKindConfig,
    /// Lotka: per-component linear rates, length m.
    pub rates: Vec<f64>,
    /// Lotka: interaction matrix, row-major, length m*m.
    pub couplings: Vec<f64>,
    /// Quadratic: the shared coefficient.
    pub coef: f64,
    /// Expressions: one formula per component in the variables w1..wm.
    pub exprs: Vec<String>,
    /// Weights of the scalar combination the audit bounds; empty means all
    /// ones. The last entry must be 1.
    pub combination: Vec<f64>,
}

impl Default for ReactionConfig {
    fn default() -> Self {
        ReactionConfig {
            kind: ReactionKindConfig::Zero,
            rates: Vec::new(),
            couplings: Vec::new(),
            coef: 1.0,
            exprs: Vec::new(),
            combination: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n_x: usize,
    pub length: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n_x: 200,
            length: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKindConfig {
    Dirichlet,
    Neumann,
    Robin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundaryConfig {
    pub kind: BoundaryKindConfig,
    /// Robin mixing parameter, in [0, 1).
    pub alpha: f64,
    /// Apply the condition to the diffusive flux instead of the bare
    /// normal derivative.
    pub diffusion_weighted: bool,
    /// Boundary data in the original coordinates; empty means zeros.
    pub values: Vec<f64>,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        BoundaryConfig {
            kind: BoundaryKindConfig::Neumann,
            alpha: 0.0,
            diffusion_weighted: false,
            values: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKindConfig {
    Const,
    Sin,
    Field,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub kind: InitialKindConfig,
    /// Const: one value per component; empty means zeros.
    pub values: Vec<f64>,
    pub offset: f64,
    pub amplitude: f64,
    /// Field: full initial data, component-major, length m*(n_x+2).
    pub field: Vec<f64>,
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig {
            kind: InitialKindConfig::Const,
            values: Vec::new(),
            offset: 0.0,
            amplitude: 0.0,
            field: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeConfig {
    Imex,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub scheme: SchemeConfig,
    pub dt: f64,
    pub t_end: f64,
    pub monitor_every: usize,
    pub n_snapshots: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig {
            scheme: SchemeConfig::Imex,
            dt: 1e-3,
            t_end: 1.0,
            monitor_every: 1,
            n_snapshots: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditSection {
    pub samples: usize,
    pub seed: u64,
}

impl Default for AuditSection {
    fn default() -> Self {
        let base = AuditConfig::default();
        AuditSection {
            samples: base.samples,
            seed: base.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub doublings: usize,
    pub bisection_steps: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        let base = SearchBudget::default();
        SearchConfig {
            doublings: base.doublings,
            bisection_steps: base.bisection_steps,
        }
    }
}

/// Matrix-related command-line overrides; `None` leaves the config value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub m: Option<usize>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
    pub pm: Option<String>,
    pub theta: Option<String>,
}

impl RunConfig {
    pub fn from_file(path: &std::path::Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            AppError::Config(format!("cannot read {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))
    }

    /// Applies flag overrides on top of whatever the file provided.
    pub fn apply(&mut self, over: &Overrides) -> Result<(), AppError> {
        if over.m.is_some() || over.a.is_some() || over.b.is_some() || over.c.is_some() {
            let mx = self.matrix.get_or_insert(MatrixConfig {
                m: 0,
                a: f64::NAN,
                b: f64::NAN,
                c: f64::NAN,
            });
            if let Some(m) = over.m {
                mx.m = m;
            }
            if let Some(a) = over.a {
                mx.a = a;
            }
            if let Some(b) = over.b {
                mx.b = b;
            }
            if let Some(c) = over.c {
                mx.c = c;
            }
        }
        if let Some(pm) = &over.pm {
            self.region.signs = pm.clone();
        }
        if let Some(theta) = &over.theta {
            self.polynomial.theta = parse_float_list(theta)
                .map_err(|e| AppError::Config(format!("--theta: {e}")))?;
        }
        Ok(())
    }

    fn matrix(&self) -> Result<&MatrixConfig, AppError> {
        let mx = self.matrix.as_ref().ok_or_else(|| {
            AppError::Config(
                "no matrix given: add a [matrix] section or pass --m --a --b --c".into(),
            )
        })?;
        if mx.m == 0 || !mx.a.is_finite() || !mx.b.is_finite() || !mx.c.is_finite() {
            return Err(AppError::Config(
                "matrix is incomplete: m, a, b, c must all be set".into(),
            ));
        }
        Ok(mx)
    }

    pub fn build_diffusion(&self) -> Result<ToeplitzDiffusion, AppError> {
        let mx = self.matrix()?;
        Ok(ToeplitzDiffusion::new(mx.m, mx.a, mx.b, mx.c)?)
    }

    pub fn build_region(&self, m: usize) -> Result<RegionSpec, AppError> {
        if self.region.signs.is_empty() {
            return Ok(RegionSpec::all_plus(m));
        }
        let signs: Vec<i8> = self
            .region
            .signs
            .chars()
            .map(|ch| match ch {
                '+' => Ok(1),
                '-' => Ok(-1),
                other => Err(AppError::Config(format!(
                    "region signs may only contain '+' and '-', found {other:?}"
                ))),
            })
            .collect::<Result<_, _>>()?;
        if signs.len() != m {
            return Err(AppError::Config(format!(
                "region pattern {:?} has {} signs for m = {m}",
                self.region.signs,
                signs.len()
            )));
        }
        Ok(RegionSpec::from_signs(signs)?)
    }

    pub fn build_polynomial(&self, m: usize) -> Result<LyapunovPolynomial, AppError> {
        let thetas = match self.polynomial.theta.len() {
            1 => vec![self.polynomial.theta[0]; m - 1],
            k if k == m - 1 => self.polynomial.theta.clone(),
            k => {
                return Err(AppError::Config(format!(
                    "{k} weights given; expected one (broadcast) or m-1 = {}",
                    m - 1
                )))
            }
        };
        Ok(LyapunovPolynomial::new(m, self.polynomial.degree, thetas)?)
    }

    pub fn build_reaction(&self, m: usize) -> Result<ReactionSpec, AppError> {
        let r = &self.reaction;
        let kind = match r.kind {
            ReactionKindConfig::Zero => ReactionKind::Zero,
            ReactionKindConfig::Lotka => {
                if r.rates.len() != m {
                    return Err(AppError::Config(format!(
                        "lotka rates: got {} values for m = {m}",
                        r.rates.len()
                    )));
                }
                if r.couplings.len() != m * m {
                    return Err(AppError::Config(format!(
                        "lotka couplings: got {} values, expected m*m = {}",
                        r.couplings.len(),
                        m * m
                    )));
                }
                let rows: Vec<&[f64]> = r.couplings.chunks(m).collect();
                ReactionKind::LotkaChain {
                    rates: r.rates.clone(),
                    couplings: DMat::from_rows(&rows),
                }
            }
            ReactionKindConfig::Quadratic => ReactionKind::Quadratic { coef: r.coef },
            ReactionKindConfig::Expressions => {
                if r.exprs.len() != m {
                    return Err(AppError::Config(format!(
                        "expressions: got {} formulas for m = {m}",
                        r.exprs.len()
                    )));
                }
                let exprs = r
                    .exprs
                    .iter()
                    .map(|s| expr::parse(s))
                    .collect::<rdcert_core::Result<Vec<_>>>()?;
                ReactionKind::Expressions { exprs }
            }
        };
        let spec = ReactionSpec::new(m, kind)?;
        if r.combination.is_empty() {
            Ok(spec)
        } else {
            Ok(spec.with_combination(r.combination.clone())?)
        }
    }

    pub fn build_setup(&self, m: usize) -> Result<SimSetup, AppError> {
        let grid = GridSpec {
            n_x: self.grid.n_x,
            length: self.grid.length,
        };
        let values = if self.boundary.values.is_empty() {
            vec![0.0; m]
        } else {
            self.boundary.values.clone()
        };
        let boundary = match self.boundary.kind {
            BoundaryKindConfig::Dirichlet => BoundarySpec::dirichlet(values),
            BoundaryKindConfig::Neumann => BoundarySpec::neumann(values),
            BoundaryKindConfig::Robin => BoundarySpec::robin(
                self.boundary.alpha,
                self.boundary.diffusion_weighted,
                values,
            ),
        };
        let initial = match self.initial.kind {
            InitialKindConfig::Const => {
                let values = if self.initial.values.is_empty() {
                    vec![0.0; m]
                } else {
                    self.initial.values.clone()
                };
                InitialData::Const(values)
            }
            InitialKindConfig::Sin => InitialData::Sin {
                offset: self.initial.offset,
                amplitude: self.initial.amplitude,
            },
            InitialKindConfig::Field => InitialData::Field(self.initial.field.clone()),
        };
        Ok(SimSetup {
            grid,
            boundary,
            initial,
            scheme: match self.time.scheme {
                SchemeConfig::Imex => Scheme::Imex,
                SchemeConfig::Explicit => Scheme::Explicit,
            },
            dt: self.time.dt,
            t_end: self.time.t_end,
            monitor_every: self.time.monitor_every,
            n_snapshots: self.time.n_snapshots,
        })
    }

    pub fn audit_config(&self) -> AuditConfig {
        AuditConfig {
            samples: self.audit.samples,
            seed: self.audit.seed,
        }
    }

    pub fn search_budget(&self) -> SearchBudget {
        SearchBudget {
            doublings: self.search.doublings,
            bisection_steps: self.search.bisection_steps,
        }
    }
}

/// Parses `"1.5,2.0"` into numbers; used by the list-valued flags.
pub fn parse_float_list(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|part| {
            let part = part.trim();
            part.parse::<f64>()
                .map_err(|_| format!("{part:?} is not a number"))
        })
        .collect()
}
