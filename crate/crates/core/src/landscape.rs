//! Solution landscapes: stationary points connected by upward and downward
//! saddle searches.
//!
//! Every node is verified before insertion: its force norm is recorded and
//! its Morse index is counted from the low end of the Hessian spectrum.
//! Points related by a model symmetry (cyclic shift or mirror of a periodic
//! grid) are stored once.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{run, SaddleState, Scheme, SchemeConfig, Termination};
use crate::error::{HisdError, Result};
use crate::linalg::eigen::{smallest_eigpairs, EigenConfig};
use crate::linalg::gmres::{gmres_solve, GmresConfig};
use crate::linalg::vector::norm;
use crate::linalg::{FnOperator, LinearOperator};
use crate::model::{
    weighted_norm, EnergyModel, Evaluator, HessianOperator, HvpMode, JacobianOperator,
    QueryCounter, Symmetry,
};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPoint<T> {
    pub id: String,
    pub x: Vec<T>,
    /// Number of Hessian eigenvalues below `-index_tol * extent`.
    pub morse_index: usize,
    /// Number of Hessian eigenvalues within `index_tol * extent` of zero.
    pub null_dim: usize,
    pub energy: Option<T>,
    pub force_norm: T,
    /// Smallest Hessian eigenvalues, ascending.
    pub eigenvalues: Vec<T>,
    /// Set when the index of the dynamics that found the point lies outside
    /// `morse_index..=morse_index + null_dim`, or when the eigen-solve did
    /// not converge.
    pub flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchKind {
    Upward,
    Downward,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub parent: String,
    pub child: String,
    /// 1-based position of the perturbation eigenvector in the parent's
    /// ascending spectrum.
    pub direction: usize,
    /// `+1` or `-1`.
    pub sign: i8,
    pub kind: SearchKind,
}

/// One child search and its cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRun<T> {
    pub parent: String,
    /// `None` when the run did not converge.
    pub child: Option<String>,
    pub direction: usize,
    pub sign: i8,
    pub kind: SearchKind,
    pub index_k: usize,
    pub scheme: Scheme,
    pub tau: T,
    pub termination: Termination,
    pub n_iter: usize,
    pub counters: QueryCounter,
    pub cpu_seconds: f64,
    /// Largest `|V^T V - I|_max` over the run's steps.
    #[serde(default)]
    pub max_orthonormality_defect: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeGraph<T> {
    pub root: String,
    pub nodes: Vec<StationaryPoint<T>>,
    pub edges: Vec<Edge>,
    pub runs: Vec<SearchRun<T>>,
}

#[derive(Debug, Clone, Copy)]
pub struct SearchConfig<T> {
    /// Dynamics for child runs; `index_k` is overwritten per run.
    pub dynamics: SchemeConfig<T>,
    /// Perturbation size; `None` uses `max(0.1 |x|, 0.1)`.
    pub epsilon: Option<T>,
    /// Max-norm distance under which two points are the same node.
    pub dedupe_tol: T,
    /// Relative threshold for classifying an eigenvalue as negative or null.
    pub index_tol: T,
    /// Perturbation directions tried per node during upward search.
    pub candidates: usize,
    /// Eigenpairs computed per verification.
    pub eig_count: usize,
    pub eig: EigenConfig<T>,
    /// Downward search recurses into children of index >= 1.
    pub recursive: bool,
    pub max_nodes: usize,
    pub parallel: bool,
    /// Newton steps applied to a converged point before verification.
    pub polish_steps: usize,
}

impl<T: Scalar> SearchConfig<T> {
    pub fn new(dynamics: SchemeConfig<T>) -> Self {
        Self {
            dynamics,
            epsilon: None,
            dedupe_tol: T::lit(1e-3),
            index_tol: T::lit(1e-6),
            candidates: 2,
            eig_count: 24,
            eig: EigenConfig::default(),
            recursive: false,
            max_nodes: 64,
            parallel: true,
            polish_steps: 6,
        }
    }

    pub fn epsilon_for(&self, x: &[T]) -> T {
        self.epsilon
            .unwrap_or_else(|| (T::lit(0.1) * norm(x)).max(T::lit(0.1)))
    }
}

/// Low end of the Hessian spectrum at a point.
#[derive(Debug, Clone)]
pub struct Spectrum<T> {
    pub values: Vec<T>,
    pub vectors: Vec<Vec<T>>,
    pub extent: T,
    pub converged: bool,
}

impl<T: Scalar> Spectrum<T> {
    pub fn morse_index(&self, index_tol: T) -> usize {
        let tol = index_tol * self.extent;
        self.values.iter().filter(|&&v| v < -tol).count()
    }

    pub fn null_dim(&self, index_tol: T) -> usize {
        let tol = index_tol * self.extent;
        self.values.iter().filter(|&&v| v.abs() <= tol).count()
    }
}

/// Hessian eigenpairs at `x`, from the exact product when the model has one
/// and from a short dimer otherwise.
pub fn hessian_spectrum<T: Scalar>(
    model: &dyn EnergyModel<T>,
    x: &[T],
    count: usize,
    cfg: &EigenConfig<T>,
) -> Result<Spectrum<T>> {
    let mut eval = Evaluator::new(model);
    let mode = if model.has_exact_hvp() {
        HvpMode::Exact
    } else {
        HvpMode::Dimer(T::lit(1e-5) * norm(x).max(T::one()))
    };
    let mut op = HessianOperator(JacobianOperator {
        eval: &mut eval,
        x,
        mode,
    });
    let res = smallest_eigpairs(&mut op, count.min(x.len()), cfg)?;
    let mut vectors = res.vectors;
    for v in &mut vectors {
        fix_sign(v);
    }
    Ok(Spectrum {
        values: res.values,
        vectors,
        extent: res.extent,
        converged: res.converged,
    })
}

/// Flips `v` so its overlap with a fixed quasi-random vector is positive,
/// making perturbation signs reproducible under tiny changes of the point.
fn fix_sign<T: Scalar>(v: &mut [T]) {
    let golden = 0.618_033_988_749_894_9_f64;
    let overlap = v.iter().enumerate().fold(T::zero(), |acc, (i, &c)| {
        let w = ((i as f64 + 1.0) * golden).fract() - 0.5;
        acc + T::lit(w) * c
    });
    if overlap < T::zero() {
        for c in v.iter_mut() {
            *c = -*c;
        }
    }
}

/// Unit periodic derivative of `x`: the generator of grid translations.
fn translation_mode<T: Scalar>(x: &[T]) -> Option<Vec<T>> {
    let n = x.len();
    let mut t: Vec<T> = (0..n)
        .map(|i| x[(i + 1) % n] - x[(i + n - 1) % n])
        .collect();
    let len = norm(&t);
    if len <= T::lit(1e-12) * norm(x).max(T::one()) {
        return None;
    }
    t.iter_mut().for_each(|v| *v = *v / len);
    Some(t)
}

fn project_out<T: Scalar>(mode: Option<&[T]>, v: &mut [T]) {
    if let Some(t) = mode {
        let c = crate::linalg::vector::dot(t, v);
        crate::linalg::vector::axpy(-c, t, v);
    }
}

/// Damped Newton iterations `J(x) d = -F(x)` from `x`, solved by GMRES.
/// Each step is halved until it lowers `|F|`; the loop ends when no
/// fraction of the step does. Returns `x` unchanged unless `|F|` dropped
/// at least tenfold: along very soft modes damped steps wander without
/// converging. For [`Symmetry::CyclicMirror`] fields the
/// translation direction is projected out of the system, since it spans
/// an (approximate) null space of `J`.
pub fn polish_point<T: Scalar>(
    model: &dyn EnergyModel<T>,
    x: &[T],
    steps: usize,
) -> Result<Vec<T>> {
    let mut eval = Evaluator::new(model);
    let start = x;
    let mut x = x.to_vec();
    let mut f = eval.force(&x)?;
    let mut fn0 = norm(&f);
    let initial = fn0;
    let gmres = GmresConfig {
        rel_tol: T::lit(1e-8),
        abs_tol: T::lit(1e-14),
        max_iter: Some(x.len().min(400)),
        restart: None,
    };
    for _ in 0..steps {
        if fn0 <= T::lit(1e-12) {
            break;
        }
        let mode = if model.has_exact_hvp() {
            HvpMode::Exact
        } else {
            HvpMode::Dimer(T::lit(1e-5) * norm(&x).max(T::one()))
        };
        let shift = match model.symmetry() {
            Symmetry::CyclicMirror => translation_mode(&x),
            Symmetry::None => None,
        };
        let mut rhs: Vec<T> = f.iter().map(|&v| -v).collect();
        project_out(shift.as_deref(), &mut rhs);
        let d = {
            let mut jac = JacobianOperator {
                eval: &mut eval,
                x: &x,
                mode,
            };
            let t = shift.as_deref();
            let mut pv = vec![T::zero(); x.len()];
            let mut op = FnOperator::new(x.len(), |v: &[T], y: &mut [T]| {
                pv.copy_from_slice(v);
                project_out(t, &mut pv);
                jac.apply(&pv, y);
                project_out(t, y);
            });
            match gmres_solve(&mut op, &rhs, &gmres) {
                Ok((d, _)) => d,
                Err(HisdError::SolveFailed { .. } | HisdError::NumericalBreakdown { .. }) => break,
                Err(e) => return Err(e),
            }
        };
        let dmax = d.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let mut alpha = T::one().min(T::lit(0.5) / dmax.max(T::min_positive_value()));
        let mut accepted = None;
        for _ in 0..8 {
            let trial: Vec<T> = x.iter().zip(&d).map(|(&a, &b)| a + alpha * b).collect();
            let ft = eval.force(&trial)?;
            let nt = norm(&ft);
            if nt < fn0 {
                accepted = Some((trial, ft, nt));
                break;
            }
            alpha = alpha * T::lit(0.5);
        }
        let Some((trial, ft, nt)) = accepted else {
            break;
        };
        x = trial;
        f = ft;
        fn0 = nt;
    }
    if fn0 <= T::lit(0.1) * initial {
        Ok(x)
    } else {
        Ok(start.to_vec())
    }
}

/// Verifies `x` as a stationary point and returns it with its spectrum.
/// `requested` is the index of the dynamics that produced `x`, if any.
pub fn verify_point<T: Scalar>(
    model: &dyn EnergyModel<T>,
    x: &[T],
    requested: Option<usize>,
    cfg: &SearchConfig<T>,
) -> Result<(StationaryPoint<T>, Spectrum<T>)> {
    let mut eval = Evaluator::new(model);
    let force_norm = weighted_norm(model, &eval.force(x)?);
    let energy = eval.energy(x)?;
    let spectrum = hessian_spectrum(model, x, cfg.eig_count, &cfg.eig)?;
    let morse_index = spectrum.morse_index(cfg.index_tol);
    let null_dim = spectrum.null_dim(cfg.index_tol);
    let mismatch = requested.is_some_and(|k| k < morse_index || k > morse_index + null_dim);
    if mismatch {
        warn!(
            "{}: dynamics of index {} converged to a point of index {morse_index}",
            model.name(),
            requested.unwrap_or_default()
        );
    }
    let point = StationaryPoint {
        id: content_id(x, model.symmetry()),
        x: x.to_vec(),
        morse_index,
        null_dim,
        energy,
        force_norm,
        eigenvalues: spectrum.values.clone(),
        flagged: mismatch || !spectrum.converged,
    };
    Ok((point, spectrum))
}

fn symmetry_images<T: Scalar>(y: &[T], symmetry: Symmetry) -> Vec<Vec<T>> {
    match symmetry {
        Symmetry::None => vec![y.to_vec()],
        Symmetry::CyclicMirror => {
            let n = y.len();
            let mirrored: Vec<T> = y.iter().rev().copied().collect();
            let mut out = Vec::with_capacity(2 * n);
            for base in [y, mirrored.as_slice()] {
                for s in 0..n {
                    out.push((0..n).map(|i| base[(i + s) % n]).collect());
                }
            }
            out
        }
    }
}

/// `min_g |x - g y|_inf` over the symmetry images `g y` of `y`.
///
/// For [`Symmetry::CyclicMirror`] the translations include sub-grid shifts,
/// evaluated by trigonometric interpolation around the best whole-cell shift.
pub fn symmetric_distance<T: Scalar>(x: &[T], y: &[T], symmetry: Symmetry) -> T {
    if x.len() != y.len() {
        return T::infinity();
    }
    let n = x.len();
    let dist =
        |img: &dyn Fn(usize) -> T| (0..n).fold(T::zero(), |m, i| m.max((x[i] - img(i)).abs()));
    match symmetry {
        Symmetry::None => dist(&|i| y[i]),
        Symmetry::CyclicMirror => {
            let mut best = T::infinity();
            let mut candidates = Vec::with_capacity(2);
            let mirrored: Vec<T> = y.iter().rev().copied().collect();
            for base in [y, mirrored.as_slice()] {
                let (mut s_best, mut d_best) = (0, T::infinity());
                for s in 0..n {
                    let d = dist(&|i| base[(i + s) % n]);
                    if d < d_best {
                        (s_best, d_best) = (s, d);
                    }
                }
                best = best.min(d_best);
                candidates.push((base, s_best));
            }
            if (4..=SUBGRID_LIMIT).contains(&n) {
                let xf: Vec<f64> = x.iter().map(|v| v.to_f64_lossy()).collect();
                for (base, s0) in candidates {
                    let jump =
                        (0..n).fold(T::zero(), |m, i| m.max((base[(i + 1) % n] - base[i]).abs()));
                    if dist(&|i| base[(i + s0) % n]) > T::lit(1.5) * jump {
                        continue;
                    }
                    let d = subgrid_distance(&xf, base, s0 as f64);
                    best = best.min(T::lit(d));
                }
            }
            best
        }
    }
}

const SUBGRID_LIMIT: usize = 4096;

/// Samples of the trigonometric interpolant of `base` shifted by `s` cells.
struct Interpolant {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Interpolant {
    fn new<T: Scalar>(base: &[T]) -> Self {
        let n = base.len();
        let b: Vec<f64> = base.iter().map(|v| v.to_f64_lossy()).collect();
        let half = n / 2;
        let mut re = vec![0.0; half + 1];
        let mut im = vec![0.0; half + 1];
        for m in 0..=half {
            let w = -2.0 * std::f64::consts::PI * m as f64 / n as f64;
            for (i, &v) in b.iter().enumerate() {
                let (sn, cs) = (w * i as f64).sin_cos();
                re[m] += v * cs;
                im[m] += v * sn;
            }
        }
        Self { re, im }
    }

    fn shifted(&self, n: usize, s: f64) -> Vec<f64> {
        let half = n / 2;
        (0..n)
            .map(|i| {
                let t = i as f64 + s;
                let mut acc = self.re[0];
                for m in 1..=half {
                    let w = 2.0 * std::f64::consts::PI * m as f64 * t / n as f64;
                    let (sn, cs) = w.sin_cos();
                    let term = self.re[m] * cs - self.im[m] * sn;
                    acc += if 2 * m == n { term } else { 2.0 * term };
                }
                acc / n as f64
            })
            .collect()
    }
}

fn subgrid_distance<T: Scalar>(x: &[f64], base: &[T], s0: f64) -> f64 {
    let n = x.len();
    let interp = Interpolant::new(base);
    let l2 = |s: f64| {
        interp
            .shifted(n, s)
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    };
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (s0 - 1.0, s0 + 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (l2(c), l2(d));
    for _ in 0..32 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = l2(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = l2(d);
        }
    }
    let s = 0.5 * (a + b);
    interp
        .shifted(n, s)
        .iter()
        .zip(x)
        .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

/// Hash of the symmetry-canonical form of `x`, rounded to 1e-6.
pub fn content_id<T: Scalar>(x: &[T], symmetry: Symmetry) -> String {
    let quantize = |v: &[T]| -> Vec<i64> {
        v.iter()
            .map(|e| (e.to_f64_lossy() * 1e6).round() as i64)
            .collect()
    };
    let canonical = symmetry_images(x, symmetry)
        .iter()
        .map(|img| quantize(img))
        .min()
        .unwrap_or_default();
    let mut hasher = Sha256::new();
    for q in &canonical {
        hasher.update(q.to_le_bytes());
    }
    let digest = hasher.finalize();
    digest[..8].iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

impl<T: Scalar> LandscapeGraph<T> {
    pub fn new(root: StationaryPoint<T>) -> Self {
        Self {
            root: root.id.clone(),
            nodes: vec![root],
            edges: Vec::new(),
            runs: Vec::new(),
        }
    }

    pub fn node(&self, id: &str) -> Option<&StationaryPoint<T>> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn root_node(&self) -> &StationaryPoint<T> {
        self.node(&self.root).expect("root is always stored")
    }

    pub fn max_index(&self) -> usize {
        self.nodes.iter().map(|n| n.morse_index).max().unwrap_or(0)
    }

    /// Nodes of the largest Morse index.
    pub fn top_nodes(&self) -> Vec<&StationaryPoint<T>> {
        let m = self.max_index();
        self.nodes.iter().filter(|n| n.morse_index == m).collect()
    }

    /// The stored node matching `x` up to symmetry, if any.
    pub fn find(&self, x: &[T], tol: T, symmetry: Symmetry) -> Option<&StationaryPoint<T>> {
        self.nodes
            .iter()
            .find(|n| symmetric_distance(x, &n.x, symmetry) <= tol)
    }

    /// Returns the id of the stored node equal to `point` up to symmetry,
    /// inserting `point` first when there is none. The flag is `true` for a
    /// new node.
    pub fn dedupe(
        &mut self,
        point: StationaryPoint<T>,
        tol: T,
        symmetry: Symmetry,
    ) -> (String, bool) {
        if let Some(existing) = self.find(&point.x, tol, symmetry) {
            return (existing.id.clone(), false);
        }
        let mut point = point;
        while self.node(&point.id).is_some() {
            point.id.push('x');
        }
        let id = point.id.clone();
        self.nodes.push(point);
        (id, true)
    }

    pub fn add_edge(&mut self, edge: Edge) {
        if edge.parent != edge.child && !self.edges.contains(&edge) {
            self.edges.push(edge);
        }
    }

    /// Every edge joins stored nodes and every node is reachable from the
    /// root along edges (in either direction).
    pub fn is_connected(&self) -> bool {
        let known = |id: &str| self.node(id).is_some();
        if !self
            .edges
            .iter()
            .all(|e| known(&e.parent) && known(&e.child))
        {
            return false;
        }
        let mut seen = vec![self.root.clone()];
        let mut queue = VecDeque::from([self.root.clone()]);
        while let Some(id) = queue.pop_front() {
            for e in &self.edges {
                let next = if e.parent == id {
                    &e.child
                } else if e.child == id {
                    &e.parent
                } else {
                    continue;
                };
                if !seen.contains(next) {
                    seen.push(next.clone());
                    queue.push_back(next.clone());
                }
            }
        }
        seen.len() == self.nodes.len()
    }

    /// Graphviz rendering, one box per node labelled with its index.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph landscape {\n  rankdir=BT;\n");
        for n in &self.nodes {
            let energy = n
                .energy
                .map(|e| format!("\\nE={:.4}", e.to_f64_lossy()))
                .unwrap_or_default();
            let _ = writeln!(
                s,
                "  \"{}\" [shape=box,label=\"{}\\nindex {}{energy}\"{}];",
                n.id,
                n.id,
                n.morse_index,
                if n.flagged { ",color=red" } else { "" }
            );
        }
        for e in &self.edges {
            let _ = writeln!(
                s,
                "  \"{}\" -> \"{}\" [label=\"{}{}\"];",
                e.parent,
                e.child,
                if e.sign < 0 { "-" } else { "+" },
                e.direction
            );
        }
        s.push_str("}\n");
        s
    }
}

#[derive(Serialize, Deserialize)]
struct NodeRecord<T> {
    id: String,
    index: usize,
    null_dim: usize,
    energy: Option<T>,
    force_norm: T,
    eigenvalues: Vec<T>,
    flagged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    x: Option<Vec<T>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    x_file: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct GraphFile<T> {
    root: String,
    nodes: Vec<NodeRecord<T>>,
    edges: Vec<Edge>,
    #[serde(default = "Vec::new")]
    runs: Vec<SearchRun<T>>,
}

/// States longer than this go to a side CSV file instead of the JSON body.
pub const INLINE_STATE_LIMIT: usize = 256;

impl<T: Scalar + Serialize + for<'de> Deserialize<'de>> LandscapeGraph<T> {
    /// Writes the graph as JSON. States with more than
    /// [`INLINE_STATE_LIMIT`] entries are written next to `path` as
    /// `<stem>.<id>.csv` (one value per row) and referenced by file name.
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "landscape".into());
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            let (x, x_file) = if n.x.len() <= INLINE_STATE_LIMIT {
                (Some(n.x.clone()), None)
            } else {
                let name = format!("{stem}.{}.csv", n.id);
                let rows: Vec<Vec<String>> =
                    n.x.iter()
                        .map(|v| vec![crate::io::format_f64(v.to_f64_lossy())])
                        .collect();
                let file = std::fs::File::create(dir.join(&name))?;
                crate::io::write_csv_rows(file, &["x".to_string()], &rows)?;
                (None, Some(name))
            };
            nodes.push(NodeRecord {
                id: n.id.clone(),
                index: n.morse_index,
                null_dim: n.null_dim,
                energy: n.energy,
                force_norm: n.force_norm,
                eigenvalues: n.eigenvalues.clone(),
                flagged: n.flagged,
                x,
                x_file,
            });
        }
        let file = GraphFile {
            root: self.root.clone(),
            nodes,
            edges: self.edges.clone(),
            runs: self.runs.clone(),
        };
        crate::io::write_json(path, &file)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let text = std::fs::read_to_string(path)?;
        let file: GraphFile<T> = serde_json::from_str(&text)?;
        let mut nodes = Vec::with_capacity(file.nodes.len());
        for r in file.nodes {
            let x = match (r.x, r.x_file) {
                (Some(x), _) => x,
                (None, Some(name)) => {
                    let mut reader = csv::Reader::from_path(dir.join(name))?;
                    let mut x = Vec::new();
                    for rec in reader.records() {
                        let rec = rec?;
                        let v: f64 = rec.get(0).unwrap_or("").trim().parse().map_err(|_| {
                            HisdError::InvalidParameter(format!("bad state entry in node {}", r.id))
                        })?;
                        x.push(T::lit(v));
                    }
                    x
                }
                (None, None) => {
                    return Err(HisdError::InvalidParameter(format!(
                        "node {} has no state",
                        r.id
                    )))
                }
            };
            nodes.push(StationaryPoint {
                id: r.id,
                x,
                morse_index: r.index,
                null_dim: r.null_dim,
                energy: r.energy,
                force_norm: r.force_norm,
                eigenvalues: r.eigenvalues,
                flagged: r.flagged,
            });
        }
        Ok(Self {
            root: file.root,
            nodes,
            edges: file.edges,
            runs: file.runs,
        })
    }
}

struct Job<T> {
    parent: String,
    x0: Vec<T>,
    frame: Vec<Vec<T>>,
    direction: usize,
    sign: i8,
    kind: SearchKind,
}

struct JobResult<T> {
    run: SearchRun<T>,
    found: Option<(StationaryPoint<T>, Spectrum<T>)>,
}

fn perturbed<T: Scalar>(x: &[T], dir: &[T], amount: T) -> Vec<T> {
    x.iter().zip(dir).map(|(&a, &d)| a + amount * d).collect()
}

fn execute<T: Scalar>(
    model: &dyn EnergyModel<T>,
    job: &Job<T>,
    cfg: &SearchConfig<T>,
) -> Result<JobResult<T>> {
    let started = Instant::now();
    let k = job.frame.len();
    let mut dyn_cfg = cfg.dynamics;
    dyn_cfg.index_k = k;
    let initial = SaddleState::new(job.x0.clone(), job.frame.clone())?;
    let record = run(model, &initial, &dyn_cfg)?;
    let found = if record.converged() {
        let x = polish_point(model, &record.final_state.x, cfg.polish_steps)?;
        Some(verify_point(model, &x, Some(k), cfg)?)
    } else {
        warn!(
            "{} search from {} along {}{} with index {k} ended with {:?}",
            match job.kind {
                SearchKind::Upward => "upward",
                SearchKind::Downward => "downward",
            },
            job.parent,
            if job.sign < 0 { "-" } else { "+" },
            job.direction,
            record.termination
        );
        None
    };
    Ok(JobResult {
        run: SearchRun {
            parent: job.parent.clone(),
            child: None,
            direction: job.direction,
            sign: job.sign,
            kind: job.kind,
            index_k: k,
            scheme: dyn_cfg.scheme,
            tau: dyn_cfg.tau,
            termination: record.termination,
            n_iter: record.n_iter,
            counters: record.counters,
            cpu_seconds: started.elapsed().as_secs_f64(),
            max_orthonormality_defect: record.max_orthonormality_defect.to_f64_lossy(),
        },
        found,
    })
}

fn execute_all<T: Scalar>(
    model: &dyn EnergyModel<T>,
    jobs: &[Job<T>],
    cfg: &SearchConfig<T>,
) -> Result<Vec<JobResult<T>>> {
    if cfg.parallel {
        jobs.par_iter().map(|j| execute(model, j, cfg)).collect()
    } else {
        jobs.iter().map(|j| execute(model, j, cfg)).collect()
    }
}

/// Verifies `x` and wraps it as the root of a new graph.
pub fn seed_graph<T: Scalar>(
    model: &dyn EnergyModel<T>,
    x: &[T],
    cfg: &SearchConfig<T>,
) -> Result<LandscapeGraph<T>> {
    let (point, _) = verify_point(model, x, None, cfg)?;
    if point.force_norm > cfg.dynamics.stop_force_norm {
        return Err(HisdError::InvalidParameter(format!(
            "seed is not stationary: |F| = {:e}",
            point.force_norm.to_f64_lossy()
        )));
    }
    Ok(LandscapeGraph::new(point))
}

/// Registers finished jobs in order; returns ids of newly inserted nodes.
fn absorb<T: Scalar>(
    graph: &mut LandscapeGraph<T>,
    results: Vec<JobResult<T>>,
    symmetry: Symmetry,
    cfg: &SearchConfig<T>,
    spectra: &mut BTreeMap<String, Spectrum<T>>,
) -> Vec<String> {
    let mut fresh = Vec::new();
    for JobResult { mut run, found } in results {
        if let Some((point, spectrum)) = found {
            if graph.nodes.len() >= cfg.max_nodes
                && graph.find(&point.x, cfg.dedupe_tol, symmetry).is_none()
            {
                warn!("node limit {} reached; dropping a new point", cfg.max_nodes);
            } else {
                let (id, is_new) = graph.dedupe(point, cfg.dedupe_tol, symmetry);
                if is_new {
                    debug!("new node {id}");
                    spectra.insert(id.clone(), spectrum);
                    fresh.push(id.clone());
                }
                graph.add_edge(Edge {
                    parent: run.parent.clone(),
                    child: id.clone(),
                    direction: run.direction,
                    sign: run.sign,
                    kind: run.kind,
                });
                run.child = Some(id);
            }
        }
        graph.runs.push(run);
    }
    fresh
}

/// Rebuilds the starting state of `run` from its parent node, using the
/// same spectrum, perturbation and frame as the search that produced it.
pub fn run_seed<T: Scalar>(
    model: &dyn EnergyModel<T>,
    graph: &LandscapeGraph<T>,
    run: &SearchRun<T>,
    cfg: &SearchConfig<T>,
) -> Result<SaddleState<T>> {
    let parent = graph.node(&run.parent).ok_or_else(|| {
        HisdError::InvalidParameter(format!("unknown parent node {}", run.parent))
    })?;
    let count = match run.kind {
        SearchKind::Upward => cfg.eig_count,
        SearchKind::Downward => cfg.eig_count.max(parent.morse_index),
    };
    let spectrum = hessian_spectrum(model, &parent.x, count, &cfg.eig)?;
    let j = run.direction - 1;
    if run.direction == 0 || j >= spectrum.vectors.len() {
        return Err(HisdError::InvalidParameter(format!(
            "direction {} outside the computed spectrum",
            run.direction
        )));
    }
    let mut frame: Vec<Vec<T>> = match run.kind {
        SearchKind::Upward => spectrum.vectors[..run.index_k - 1].to_vec(),
        SearchKind::Downward => spectrum.vectors[..j].to_vec(),
    };
    if run.kind == SearchKind::Upward {
        frame.push(spectrum.vectors[j].clone());
    }
    let eps = cfg.epsilon_for(&parent.x);
    let amount = if run.sign < 0 { -eps } else { eps };
    SaddleState::new(perturbed(&parent.x, &spectrum.vectors[j], amount), frame)
}

/// Grows the graph upward from `seed` until `target_index` is reached.
///
/// From a node with `m` negative and `z` null eigenvalues, each candidate
/// direction `u_j` (`j = m + z + 1, ...`) seeds a run of index `m + z + 1`
/// from `x +- eps u_j` with frame `u_1 .. u_{m+z}, u_j`.
pub fn upward_search<T: Scalar>(
    model: &dyn EnergyModel<T>,
    seed: &StationaryPoint<T>,
    target_index: usize,
    cfg: &SearchConfig<T>,
) -> Result<LandscapeGraph<T>> {
    let mut graph = LandscapeGraph::new(seed.clone());
    upward_from(model, &mut graph, &seed.id, target_index, cfg)?;
    Ok(graph)
}

/// Upward search from an existing node of `graph`, extending it in place.
pub fn upward_from<T: Scalar>(
    model: &dyn EnergyModel<T>,
    graph: &mut LandscapeGraph<T>,
    start: &str,
    target_index: usize,
    cfg: &SearchConfig<T>,
) -> Result<()> {
    let symmetry = model.symmetry();
    let mut spectra = BTreeMap::new();
    let mut frontier = vec![start.to_string()];
    while !frontier.is_empty() {
        let mut jobs = Vec::new();
        for id in &frontier {
            let node = graph.node(id).expect("frontier ids are stored").clone();
            if node.morse_index >= target_index {
                continue;
            }
            let spectrum = match spectra.remove(id) {
                Some(s) => s,
                None => hessian_spectrum(model, &node.x, cfg.eig_count, &cfg.eig)?,
            };
            let base = node.morse_index + node.null_dim;
            let eps = cfg.epsilon_for(&node.x);
            for c in 0..cfg.candidates {
                let j = base + c;
                if j >= spectrum.vectors.len() {
                    break;
                }
                let mut frame: Vec<Vec<T>> = spectrum.vectors[..base].to_vec();
                frame.push(spectrum.vectors[j].clone());
                for sign in [1i8, -1] {
                    let amount = if sign < 0 { -eps } else { eps };
                    jobs.push(Job {
                        parent: node.id.clone(),
                        x0: perturbed(&node.x, &spectrum.vectors[j], amount),
                        frame: frame.clone(),
                        direction: j + 1,
                        sign,
                        kind: SearchKind::Upward,
                    });
                }
            }
        }
        let results = execute_all(model, &jobs, cfg)?;
        frontier = absorb(graph, results, symmetry, cfg, &mut spectra)
            .into_iter()
            .filter(|id| graph.node(id).is_some_and(|n| n.morse_index < target_index))
            .collect();
    }
    Ok(())
}

/// Relaxes `seed` along each of its unstable directions: for the `j`-th
/// one, a run of index `j - 1` from `x +- eps u_j` with frame
/// `u_1 .. u_{j-1}`.
pub fn downward_search<T: Scalar>(
    model: &dyn EnergyModel<T>,
    seed: &StationaryPoint<T>,
    cfg: &SearchConfig<T>,
) -> Result<LandscapeGraph<T>> {
    if seed.morse_index == 0 {
        return Err(HisdError::InvalidParameter(
            "downward search needs a seed with index >= 1".into(),
        ));
    }
    let mut graph = LandscapeGraph::new(seed.clone());
    downward_from(model, &mut graph, &seed.id, cfg)?;
    Ok(graph)
}

/// Downward search from an existing node of `graph`, extending it in place.
pub fn downward_from<T: Scalar>(
    model: &dyn EnergyModel<T>,
    graph: &mut LandscapeGraph<T>,
    start: &str,
    cfg: &SearchConfig<T>,
) -> Result<()> {
    let symmetry = model.symmetry();
    let mut spectra = BTreeMap::new();
    let mut frontier = vec![start.to_string()];
    while !frontier.is_empty() {
        let mut jobs = Vec::new();
        for id in &frontier {
            let node = graph.node(id).expect("frontier ids are stored").clone();
            let spectrum = match spectra.remove(id) {
                Some(s) => s,
                None => hessian_spectrum(
                    model,
                    &node.x,
                    cfg.eig_count.max(node.morse_index),
                    &cfg.eig,
                )?,
            };
            let eps = cfg.epsilon_for(&node.x);
            for j in 1..=node.morse_index.min(spectrum.vectors.len()) {
                let frame = spectrum.vectors[..j - 1].to_vec();
                for sign in [1i8, -1] {
                    let amount = if sign < 0 { -eps } else { eps };
                    jobs.push(Job {
                        parent: node.id.clone(),
                        x0: perturbed(&node.x, &spectrum.vectors[j - 1], amount),
                        frame: frame.clone(),
                        direction: j,
                        sign,
                        kind: SearchKind::Downward,
                    });
                }
            }
        }
        let results = execute_all(model, &jobs, cfg)?;
        let fresh = absorb(graph, results, symmetry, cfg, &mut spectra);
        frontier = if cfg.recursive {
            fresh
                .into_iter()
                .filter(|id| graph.node(id).is_some_and(|n| n.morse_index >= 1))
                .collect()
        } else {
            Vec::new()
        };
    }
    Ok(())
}
