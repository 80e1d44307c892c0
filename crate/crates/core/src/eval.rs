//! Accuracy metrics against analytic or finite-difference references.
//!
//! Both fields are min-shifted over the evaluation set before comparison.
//! The metrics come in two forms. The printed form divides only the
//! numerator by `N`:
//!
//! ```text
//! rRMSE = sqrt(sum (V_l - V_r)^2 / N) / sqrt(sum V_r^2)
//! rMAE  = (sum |V_l - V_r| / N) / sum |V_r|
//! ```
//!
//! The normalized form drops the `1/N`, which gives the usual relative
//! errors (the printed values are these divided by `sqrt(N)` and `N`).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdm::{self, FluxScheme, GridInterpolator};
use crate::network::checkpoint::format_f64;
use crate::network::FieldNetwork;
use crate::scalar::Scalar;
use crate::systems::{self, Domain, Kind, SystemSpec, COUPLED_Y_HALF_WIDTH};

pub const FULL_GRID_POINTS_LOW_DIM: usize = 101;
pub const FULL_GRID_POINTS_1D: usize = 401;
pub const FULL_GRID_POINTS_3D: usize = 61;
pub const PLANE_POINTS: usize = 101;
pub const AXIS_POINTS: usize = 401;

/// Subtracts the minimum. Non-finite entries are ignored when taking the
/// minimum and left as they are.
pub fn min_shift(values: &[f64]) -> Vec<f64> {
    let m = finite_min(values);
    values.iter().map(|v| v - m).collect()
}

fn finite_min(values: &[f64]) -> f64 {
    let m = values.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    if m.is_finite() {
        m
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub rrmse: f64,
    pub rmae: f64,
    pub rrmse_normalized: f64,
    pub rmae_normalized: f64,
}

impl Metrics {
    /// Both forms for already shifted fields.
    pub fn compute(learned: &[f64], reference: &[f64]) -> Result<Self> {
        if learned.len() != reference.len() {
            return Err(Error::DimensionMismatch {
                what: "metric inputs",
                expected: reference.len(),
                got: learned.len(),
            });
        }
        if reference.is_empty() {
            return Err(Error::UndefinedMetric("empty evaluation set"));
        }
        let n = reference.len() as f64;
        let (mut sq, mut ab, mut ref_sq, mut ref_ab) = (0.0, 0.0, 0.0, 0.0);
        for (l, r) in learned.iter().zip(reference) {
            let e = l - r;
            sq += e * e;
            ab += e.abs();
            ref_sq += r * r;
            ref_ab += r.abs();
        }
        if ref_sq == 0.0 {
            return Err(Error::UndefinedMetric("reference is identically zero"));
        }
        Ok(Self {
            n: reference.len(),
            rrmse: (sq / n).sqrt() / ref_sq.sqrt(),
            rmae: (ab / n) / ref_ab,
            rrmse_normalized: (sq / ref_sq).sqrt(),
            rmae_normalized: ab / ref_ab,
        })
    }

    pub fn headline(&self, normalized: bool) -> (f64, f64) {
        if normalized {
            (self.rrmse_normalized, self.rmae_normalized)
        } else {
            (self.rrmse, self.rmae)
        }
    }
}

/// rRMSE exactly as printed (`1/N` in the numerator only).
pub fn rrmse(learned: &[f64], reference: &[f64]) -> Result<f64> {
    Ok(Metrics::compute(learned, reference)?.rrmse)
}

/// rMAE exactly as printed (`1/N` in the numerator only).
pub fn rmae(learned: &[f64], reference: &[f64]) -> Result<f64> {
    Ok(Metrics::compute(learned, reference)?.rmae)
}

pub fn rrmse_normalized(learned: &[f64], reference: &[f64]) -> Result<f64> {
    Ok(Metrics::compute(learned, reference)?.rrmse_normalized)
}

pub fn rmae_normalized(learned: &[f64], reference: &[f64]) -> Result<f64> {
    Ok(Metrics::compute(learned, reference)?.rmae_normalized)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    Full,
    CrossSections,
}

/// Contiguous block of evaluation points. `axes` lists the coordinates that
/// vary; every other coordinate sits at the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub axes: Vec<usize>,
    pub start: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalGrid {
    pub dim: usize,
    pub kind: GridKind,
    /// Row-major `len x dim`.
    pub points: Vec<f64>,
    pub sections: Vec<Section>,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| if i + 1 == n { b } else { a + (b - a) * i as f64 / (n - 1) as f64 }).collect()
}

impl EvalGrid {
    /// Tensor grid up to three dimensions, origin-centered cross-sections
    /// beyond.
    pub fn for_system(system: &SystemSpec) -> Result<Self> {
        match system.dim {
            1 => Self::full(system, FULL_GRID_POINTS_1D),
            2 => Self::full(system, FULL_GRID_POINTS_LOW_DIM),
            3 => Self::full(system, FULL_GRID_POINTS_3D),
            _ => Self::cross_sections(system, PLANE_POINTS, AXIS_POINTS),
        }
    }

    pub fn full(system: &SystemSpec, per_axis: usize) -> Result<Self> {
        if per_axis < 2 {
            return Err(Error::InvalidArgument("evaluation grid needs two points per axis".into()));
        }
        let d = system.dim;
        let axes: Vec<Vec<f64>> = (0..d)
            .map(|k| linspace(system.domain.lower[k], system.domain.upper[k], per_axis))
            .collect();
        let total = per_axis.pow(d as u32);
        let mut points = Vec::with_capacity(total * d);
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            points.extend(idx.iter().enumerate().map(|(k, &i)| axes[k][i]));
            for k in (0..d).rev() {
                idx[k] += 1;
                if idx[k] < per_axis {
                    break;
                }
                idx[k] = 0;
            }
        }
        Ok(Self {
            dim: d,
            kind: GridKind::Full,
            points,
            sections: vec![Section {
                name: "full".into(),
                axes: (0..d).collect(),
                start: 0,
                len: total,
            }],
        })
    }

    /// Every coordinate plane `(x_i, x_j)` and every axis line through the
    /// origin (clamped into the domain).
    pub fn cross_sections(system: &SystemSpec, plane_n: usize, axis_n: usize) -> Result<Self> {
        if plane_n < 2 || axis_n < 2 {
            return Err(Error::InvalidArgument("evaluation grid needs two points per axis".into()));
        }
        let d = system.dim;
        let dom = &system.domain;
        let base: Vec<f64> = (0..d).map(|k| 0.0f64.clamp(dom.lower[k], dom.upper[k])).collect();
        let mut points = Vec::new();
        let mut sections = Vec::new();
        for i in 0..d {
            for j in i + 1..d {
                let start = points.len() / d;
                for a in linspace(dom.lower[i], dom.upper[i], plane_n) {
                    for b in linspace(dom.lower[j], dom.upper[j], plane_n) {
                        let mut x = base.clone();
                        x[i] = a;
                        x[j] = b;
                        points.extend(x);
                    }
                }
                sections.push(Section {
                    name: format!("plane_x{}_x{}", i + 1, j + 1),
                    axes: vec![i, j],
                    start,
                    len: plane_n * plane_n,
                });
            }
        }
        for i in 0..d {
            let start = points.len() / d;
            for a in linspace(dom.lower[i], dom.upper[i], axis_n) {
                let mut x = base.clone();
                x[i] = a;
                points.extend(x);
            }
            sections.push(Section {
                name: format!("axis_x{}", i + 1),
                axes: vec![i],
                start,
                len: axis_n,
            });
        }
        Ok(Self {
            dim: d,
            kind: GridKind::CrossSections,
            points,
            sections,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }
}

/// Where reference values come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ReferenceSource {
    Analytic,
    Fdm {
        scheme: FluxScheme,
        nodes: Vec<usize>,
        nonpositive_nodes: usize,
    },
    /// `(4 V_fine - V_coarse) / 3` from solves on `nodes` and on the grid
    /// with every spacing halved.
    Richardson {
        scheme: FluxScheme,
        nodes: Vec<usize>,
        fine_nodes: Vec<usize>,
        nonpositive_nodes: usize,
    },
    /// Sum of five pair potentials in `y = B^-1 x`.
    Factorized {
        scheme: FluxScheme,
        nodes: Vec<usize>,
        nonpositive_nodes: usize,
    },
}

#[derive(Clone, Debug)]
enum Field {
    Analytic(SystemSpec),
    Grid(GridInterpolator),
    Pairs { system: SystemSpec, pair: GridInterpolator, half_width: f64 },
}

/// Ground-truth potential. Values are `NaN` where the reference is not
/// defined: non-positive discrete density, or pair coordinates outside the
/// box the pair solve covers.
#[derive(Clone, Debug)]
pub struct Reference {
    pub source: ReferenceSource,
    field: Field,
}

/// Flux scheme used for a system's finite-difference reference. The
/// oscillator's stiff drift makes central averaging produce negative mass on
/// affordable grids, so it gets exponential fitting.
pub fn reference_scheme(system: &SystemSpec) -> FluxScheme {
    match system.kind {
        Kind::Oscillator(_) => FluxScheme::ExponentialFitting,
        _ => FluxScheme::Central,
    }
}

impl Reference {
    /// Analytic if available, otherwise a finite-difference solve on the
    /// default grid.
    pub fn for_system(system: &SystemSpec) -> Result<Self> {
        if system.has_exact_potential() {
            return Ok(Self::analytic(system));
        }
        match &system.kind {
            Kind::Coupled { .. } => {
                let pair = systems::coupled_pair_2d(system.epsilon)?;
                let grid = fdm::Grid::default_for(&pair)?;
                Self::factorized(system, &grid, reference_scheme(&pair))
            }
            _ if system.dim <= 2 => {
                let grid = fdm::Grid::default_for(system)?;
                Self::fdm(system, &grid, reference_scheme(system))
            }
            _ => Err(Error::NoReference(system.id.clone())),
        }
    }

    pub fn analytic(system: &SystemSpec) -> Self {
        Self {
            source: ReferenceSource::Analytic,
            field: Field::Analytic(system.clone()),
        }
    }

    pub fn fdm(system: &SystemSpec, grid: &fdm::Grid, scheme: FluxScheme) -> Result<Self> {
        let op = fdm::assemble_with(system, grid, scheme)?;
        let sol = fdm::steady_state(system, &op)?;
        Self::from_solution(sol, scheme)
    }

    pub fn from_solution(sol: fdm::FdmSolution, scheme: FluxScheme) -> Result<Self> {
        let source = ReferenceSource::Fdm {
            scheme,
            nodes: sol.grid.n.clone(),
            nonpositive_nodes: sol.nonpositive_nodes,
        };
        Ok(Self {
            source,
            field: Field::Grid(GridInterpolator::new(sol.grid, sol.potential)?),
        })
    }

    /// Extrapolates a solve on `grid` and one with halved spacing, removing
    /// the leading `h^2` error term. Undefined wherever either solve is.
    pub fn richardson(system: &SystemSpec, grid: &fdm::Grid, scheme: FluxScheme) -> Result<Self> {
        let domain = Domain::new(grid.lower.clone(), grid.upper.clone())?;
        let fine_n: Vec<usize> = grid.n.iter().map(|&n| 2 * n - 1).collect();
        let fine_grid = fdm::Grid::new(&domain, &fine_n)?;
        let coarse = fdm::steady_state(system, &fdm::assemble_with(system, grid, scheme)?)?;
        let fine = fdm::steady_state(system, &fdm::assemble_with(system, &fine_grid, scheme)?)?;
        let values = (0..grid.len())
            .map(|i| {
                let (c, f) = (coarse.potential[i], fine.potential[fine_grid.nearest(&grid.point(i))]);
                if c.is_finite() && f.is_finite() {
                    (4.0 * f - c) / 3.0
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        Ok(Self {
            source: ReferenceSource::Richardson {
                scheme,
                nodes: grid.n.clone(),
                fine_nodes: fine_n,
                nonpositive_nodes: coarse.nonpositive_nodes + fine.nonpositive_nodes,
            },
            field: Field::Grid(GridInterpolator::new(grid.clone(), values)?),
        })
    }

    /// Coupled system: the pair potential solved on `grid`, min-shifted,
    /// summed over the five pairs of `B^-1 x`.
    pub fn factorized(system: &SystemSpec, grid: &fdm::Grid, scheme: FluxScheme) -> Result<Self> {
        if !matches!(system.kind, Kind::Coupled { .. }) {
            return Err(Error::InvalidArgument(format!("`{}` is not the coupled system", system.id)));
        }
        let pair = systems::coupled_pair_2d(system.epsilon)?;
        let op = fdm::assemble_with(&pair, grid, scheme)?;
        let sol = fdm::steady_state(&pair, &op)?;
        let source = ReferenceSource::Factorized {
            scheme,
            nodes: sol.grid.n.clone(),
            nonpositive_nodes: sol.nonpositive_nodes,
        };
        let shifted = min_shift(&sol.potential);
        let half_width = grid.upper[0].min(grid.upper[1]).min(-grid.lower[0]).min(-grid.lower[1]);
        Ok(Self {
            source,
            field: Field::Pairs {
                system: system.clone(),
                pair: GridInterpolator::new(sol.grid, shifted)?,
                half_width: half_width.min(COUPLED_Y_HALF_WIDTH),
            },
        })
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let finite = |v: f64| if v.is_finite() { v } else { f64::NAN };
        match &self.field {
            Field::Analytic(sys) => sys.exact_potential(x).unwrap_or(f64::NAN),
            Field::Grid(interp) => finite(interp.eval(x)),
            Field::Pairs { system, pair, half_width } => {
                let y = system.to_pair_coordinates(x);
                if y.iter().any(|v| v.abs() > half_width + 1e-12) {
                    return f64::NAN;
                }
                finite(y.chunks(2).map(|p| pair.eval(p)).sum())
            }
        }
    }

    pub fn values(&self, grid: &EvalGrid) -> Vec<f64> {
        (0..grid.len()).map(|i| self.value(grid.point(i))).collect()
    }
}

/// Reference values on an evaluation grid.
pub fn reference_potential(system: &SystemSpec, grid: &EvalGrid) -> Result<Vec<f64>> {
    Ok(Reference::for_system(system)?.values(grid))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionReport {
    pub name: String,
    pub axes: Vec<usize>,
    /// Points with a defined reference.
    pub points: usize,
    pub masked: usize,
    pub shift_learned: f64,
    pub shift_reference: f64,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub system_id: String,
    pub epsilon: f64,
    pub grid_kind: GridKind,
    /// Whether `rrmse`/`rmae` hold the normalized form.
    pub normalized_rrmse: bool,
    pub rrmse: f64,
    pub rmae: f64,
    pub metrics: Metrics,
    pub shift_learned: f64,
    pub shift_reference: f64,
    pub points: usize,
    /// Points dropped because the reference is undefined there.
    pub masked: usize,
    pub reference: ReferenceSource,
    pub sections: Vec<SectionReport>,
}

impl EvalReport {
    pub fn section(&self, name: &str) -> Option<&SectionReport> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Learned and reference values on every grid point, before shifting.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub grid: EvalGrid,
    pub learned: Vec<f64>,
    pub reference: Vec<f64>,
    pub report: EvalReport,
}

fn compare(learned: &[f64], reference: &[f64]) -> Result<(Metrics, f64, f64, usize)> {
    let keep: Vec<usize> = (0..reference.len()).filter(|&i| reference[i].is_finite()).collect();
    let l: Vec<f64> = keep.iter().map(|&i| learned[i]).collect();
    let r: Vec<f64> = keep.iter().map(|&i| reference[i]).collect();
    if l.iter().any(|v| !v.is_finite()) {
        return Err(Error::UndefinedMetric("learned potential is not finite"));
    }
    let (sl, sr) = (finite_min(&l), finite_min(&r));
    let metrics = Metrics::compute(&min_shift(&l), &min_shift(&r))?;
    Ok((metrics, sl, sr, reference.len() - keep.len()))
}

/// Network values at every grid point.
pub fn learned_values<S: Scalar>(network: &FieldNetwork<S>, grid: &EvalGrid) -> Result<Vec<f64>> {
    let pts: Vec<S> = grid.points.iter().map(|&v| S::c(v)).collect();
    Ok(network.values(&pts)?.into_iter().map(|v| v.to_f64_lossy()).collect())
}

/// Compares precomputed values. Global metrics shift over all defined
/// points; each section is shifted on its own.
pub fn compare_fields(
    system: &SystemSpec,
    grid: EvalGrid,
    learned: Vec<f64>,
    reference: Vec<f64>,
    source: ReferenceSource,
    normalized_rrmse: bool,
) -> Result<Evaluation> {
    if learned.len() != grid.len() || reference.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            what: "evaluation values",
            expected: grid.len(),
            got: learned.len().min(reference.len()),
        });
    }
    let (metrics, shift_learned, shift_reference, masked) = compare(&learned, &reference)?;
    let mut sections = Vec::with_capacity(grid.sections.len());
    for s in &grid.sections {
        let range = s.start..s.start + s.len;
        let (m, sl, sr, mk) = compare(&learned[range.clone()], &reference[range])?;
        sections.push(SectionReport {
            name: s.name.clone(),
            axes: s.axes.clone(),
            points: s.len - mk,
            masked: mk,
            shift_learned: sl,
            shift_reference: sr,
            metrics: m,
        });
    }
    let (rr, ra) = metrics.headline(normalized_rrmse);
    let report = EvalReport {
        system_id: system.id.clone(),
        epsilon: system.epsilon,
        grid_kind: grid.kind,
        normalized_rrmse,
        rrmse: rr,
        rmae: ra,
        metrics,
        shift_learned,
        shift_reference,
        points: grid.len() - masked,
        masked,
        reference: source,
        sections,
    };
    Ok(Evaluation {
        grid,
        learned,
        reference,
        report,
    })
}

pub fn evaluate<S: Scalar>(
    system: &SystemSpec,
    network: &FieldNetwork<S>,
    grid: EvalGrid,
    reference: &Reference,
    normalized_rrmse: bool,
) -> Result<Evaluation> {
    if network.dim() != system.dim || grid.dim != system.dim {
        return Err(Error::DimensionMismatch {
            what: "evaluation dimension",
            expected: system.dim,
            got: network.dim(),
        });
    }
    let learned = learned_values(network, &grid)?;
    let refs = reference.values(&grid);
    compare_fields(system, grid, learned, refs, reference.source.clone(), normalized_rrmse)
}

impl Evaluation {
    /// One CSV per section, `x1..xd,V_learned,V_reference`, both fields
    /// shifted as in that section's metrics.
    pub fn write_section_csvs(&self, dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let d = self.grid.dim;
        let header: Vec<String> = (1..=d)
            .map(|k| format!("x{k}"))
            .chain(["V_learned".into(), "V_reference".into()])
            .collect();
        let mut written = Vec::new();
        for (s, rep) in self.grid.sections.iter().zip(&self.report.sections) {
            let path = dir.join(format!("{}.csv", s.name));
            let mut w = BufWriter::new(fs::File::create(&path)?);
            writeln!(w, "{}", header.join(","))?;
            for i in s.start..s.start + s.len {
                let x = self.grid.point(i);
                for v in x {
                    write!(w, "{},", format_f64(*v))?;
                }
                let r = self.reference[i] - rep.shift_reference;
                let r = if r.is_finite() { format_f64(r) } else { "nan".into() };
                writeln!(w, "{},{}", format_f64(self.learned[i] - rep.shift_learned), r)?;
            }
            w.flush()?;
            written.push(path);
        }
        Ok(written)
    }
}
