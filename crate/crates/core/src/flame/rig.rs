use std::sync::Arc;

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Immutable head rig: template mesh, linear bases and skinning data.
///
/// Blendshape bases are stored flattened as `(3V) × rank`, row `3v + c` holding
/// coordinate `c` of vertex `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadRig {
    template: Array2<f64>,
    faces: Arc<Vec<[u32; 3]>>,
    shape_basis: Array2<f64>,
    expr_basis: Array2<f64>,
    joint_regressor: Array2<f64>,
    skin_weights: Array2<f64>,
    parents: Vec<i64>,
    joint_names: Vec<String>,
    jaw_joint: usize,
    head_joint: usize,
    // parents-first traversal order, computed once at construction
    order: Vec<usize>,
}

pub(crate) const SKIN_WEIGHT_TOLERANCE: f64 = 1e-6;

impl HeadRig {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        template: Array2<f64>,
        faces: Vec<[u32; 3]>,
        shape_basis: Array2<f64>,
        expr_basis: Array2<f64>,
        joint_regressor: Array2<f64>,
        skin_weights: Array2<f64>,
        parents: Vec<i64>,
        joint_names: Vec<String>,
        jaw_joint: usize,
        head_joint: usize,
    ) -> Result<Self> {
        let v = template.nrows();
        if v == 0 || template.ncols() != 3 {
            return Err(Error::Rig(format!(
                "template must be V×3 with V ≥ 1, got {:?}",
                template.dim()
            )));
        }
        let k = parents.len();
        if k == 0 {
            return Err(Error::Rig("rig has no joints".into()));
        }
        for (name, basis) in [("shape_basis", &shape_basis), ("expr_basis", &expr_basis)] {
            if basis.nrows() != 3 * v {
                return Err(Error::Rig(format!(
                    "{name} has {} rows, expected 3V = {}",
                    basis.nrows(),
                    3 * v
                )));
            }
        }
        if joint_regressor.dim() != (k, v) {
            return Err(Error::Rig(format!(
                "joint_regressor is {:?}, expected ({k}, {v})",
                joint_regressor.dim()
            )));
        }
        if skin_weights.dim() != (v, k) {
            return Err(Error::Rig(format!(
                "skin_weights is {:?}, expected ({v}, {k})",
                skin_weights.dim()
            )));
        }
        if !joint_names.is_empty() && joint_names.len() != k {
            return Err(Error::Rig(format!("{} joint names for {k} joints", joint_names.len())));
        }
        if jaw_joint >= k || head_joint >= k {
            return Err(Error::Rig(format!(
                "jaw joint {jaw_joint} / head joint {head_joint} out of range for {k} joints"
            )));
        }
        for (i, row) in skin_weights.axis_iter(Axis(0)).enumerate() {
            if row.iter().any(|w| *w < 0.0) {
                return Err(Error::Rig(format!("negative skin weight on vertex {i}")));
            }
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > SKIN_WEIGHT_TOLERANCE {
                return Err(Error::Rig(format!("skin weights of vertex {i} sum to {sum}")));
            }
        }
        for f in &faces {
            if f.iter().any(|&i| i as usize >= v) {
                return Err(Error::Rig(format!("face {f:?} references a vertex outside [0, {v})")));
            }
        }
        let finite = [&template, &shape_basis, &expr_basis, &joint_regressor, &skin_weights]
            .iter()
            .all(|a| a.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(Error::NonFinite("rig arrays".into()));
        }
        let order = traversal_order(&parents)?;
        let joint_names = if joint_names.is_empty() {
            (0..k).map(|i| format!("joint{i}")).collect()
        } else {
            joint_names
        };
        Ok(Self {
            template,
            faces: Arc::new(faces),
            shape_basis,
            expr_basis,
            joint_regressor,
            skin_weights,
            parents,
            joint_names,
            jaw_joint,
            head_joint,
            order,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.template.nrows()
    }

    pub fn n_joints(&self) -> usize {
        self.parents.len()
    }

    pub fn shape_rank(&self) -> usize {
        self.shape_basis.ncols()
    }

    pub fn expr_rank(&self) -> usize {
        self.expr_basis.ncols()
    }

    pub fn template(&self) -> &Array2<f64> {
        &self.template
    }

    pub fn faces(&self) -> &Arc<Vec<[u32; 3]>> {
        &self.faces
    }

    pub fn shape_basis(&self) -> &Array2<f64> {
        &self.shape_basis
    }

    pub fn expr_basis(&self) -> &Array2<f64> {
        &self.expr_basis
    }

    pub fn joint_regressor(&self) -> &Array2<f64> {
        &self.joint_regressor
    }

    pub fn skin_weights(&self) -> &Array2<f64> {
        &self.skin_weights
    }

    pub fn parents(&self) -> &[i64] {
        &self.parents
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn jaw_joint(&self) -> usize {
        self.jaw_joint
    }

    pub fn head_joint(&self) -> usize {
        self.head_joint
    }

    /// Joint indices ordered so that every parent precedes its children.
    pub fn traversal_order(&self) -> &[usize] {
        &self.order
    }

    /// Rest joint locations regressed from the template (K×3).
    pub fn rest_joints(&self) -> Array2<f64> {
        self.joint_regressor.dot(&self.template)
    }
}

fn traversal_order(parents: &[i64]) -> Result<Vec<usize>> {
    let k = parents.len();
    let roots: Vec<usize> = (0..k).filter(|&i| parents[i] == -1).collect();
    if roots.len() != 1 {
        return Err(Error::Rig(format!(
            "expected exactly one root joint, found {}",
            roots.len()
        )));
    }
    let mut children = vec![Vec::new(); k];
    for (i, &p) in parents.iter().enumerate() {
        if p == -1 {
            continue;
        }
        if p < 0 || p as usize >= k {
            return Err(Error::Rig(format!("joint {i} has parent {p} outside [0, {k})")));
        }
        children[p as usize].push(i);
    }
    let mut order = Vec::with_capacity(k);
    let mut stack = vec![roots[0]];
    while let Some(j) = stack.pop() {
        order.push(j);
        stack.extend(children[j].iter().rev());
    }
    // anything unreachable from the root sits on a cycle
    if order.len() != k {
        return Err(Error::Rig("joint hierarchy contains a cycle".into()));
    }
    Ok(order)
}

/// Parameters of the procedurally generated test rig.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticRigSpec {
    pub n_vertices: usize,
    pub n_joints: usize,
    pub shape_rank: usize,
    pub expr_rank: usize,
    pub seed: u64,
}

impl Default for SyntheticRigSpec {
    fn default() -> Self {
        Self {
            n_vertices: 12,
            n_joints: 2,
            shape_rank: 4,
            expr_rank: 4,
            seed: 0,
        }
    }
}

// Ellipsoid half-axes in meters (x right, y up, z forward).
const HEAD_RADII: [f64; 3] = [0.08, 0.11, 0.09];

/// Builds a closed ellipsoidal head rig with a neck root and a jaw joint.
///
/// Geometry is fixed by the vertex count; the seed only drives the blendshape
/// bases. All values are rounded to `f32` so a saved rig reloads bit-exactly.
pub fn synthetic_rig(spec: SyntheticRigSpec) -> Result<HeadRig> {
    let SyntheticRigSpec {
        n_vertices,
        n_joints,
        shape_rank,
        expr_rank,
        seed,
    } = spec;
    if n_vertices < 5 {
        return Err(Error::Invalid(format!(
            "synthetic rig needs at least 5 vertices, got {n_vertices}"
        )));
    }
    if n_joints < 2 {
        return Err(Error::Invalid(format!(
            "synthetic rig needs at least 2 joints, got {n_joints}"
        )));
    }
    if shape_rank == 0 || expr_rank == 0 {
        return Err(Error::Invalid("basis ranks must be positive".into()));
    }

    let body = n_vertices - 2;
    let segments = (3..=body)
        .filter(|d| body % d == 0)
        .min_by_key(|&d| (d as i64 - 2 * (body / d) as i64).abs())
        .unwrap_or(body);
    let rings = body / segments;

    // unit-sphere directions: top pole, rings top to bottom, bottom pole
    let mut dirs = Vec::with_capacity(n_vertices);
    dirs.push([0.0, 1.0, 0.0]);
    for r in 0..rings {
        let polar = std::f64::consts::PI * (r + 1) as f64 / (rings + 1) as f64;
        for s in 0..segments {
            let az = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
            dirs.push([polar.sin() * az.sin(), polar.cos(), polar.sin() * az.cos()]);
        }
    }
    dirs.push([0.0, -1.0, 0.0]);

    let mut template = Array2::zeros((n_vertices, 3));
    for (v, d) in dirs.iter().enumerate() {
        for c in 0..3 {
            template[[v, c]] = f32_round(d[c] * HEAD_RADII[c]);
        }
    }

    let ring_vertex = |r: usize, s: usize| (1 + r * segments + s % segments) as u32;
    let bottom = (n_vertices - 1) as u32;
    let mut faces = Vec::new();
    for s in 0..segments {
        faces.push([0, ring_vertex(0, s + 1), ring_vertex(0, s)]);
    }
    for r in 0..rings.saturating_sub(1) {
        for s in 0..segments {
            let (a, b) = (ring_vertex(r, s), ring_vertex(r, s + 1));
            let (c, d) = (ring_vertex(r + 1, s), ring_vertex(r + 1, s + 1));
            faces.push([a, b, d]);
            faces.push([a, d, c]);
        }
    }
    for s in 0..segments {
        faces.push([bottom, ring_vertex(rings - 1, s), ring_vertex(rings - 1, s + 1)]);
    }

    // joint 0: neck root, joint 1: jaw hinge, extras: eye pivots (unposed)
    let mut targets = vec![[0.0, -0.10, -0.01], [0.0, -0.02, -0.03]];
    for j in 2..n_joints {
        let side = if j % 2 == 0 { 1.0 } else { -1.0 };
        targets.push([0.03 * side, 0.03, 0.07]);
    }
    let mut joint_regressor = Array2::zeros((n_joints, n_vertices));
    for (k, target) in targets.iter().enumerate() {
        let weights: Vec<f64> = dirs
            .iter()
            .enumerate()
            .map(|(v, _)| {
                let d2: f64 = (0..3).map(|c| (template[[v, c]] - target[c]).powi(2)).sum();
                (-d2 / (2.0 * 0.04f64.powi(2))).exp()
            })
            .collect();
        let total: f64 = weights.iter().sum();
        for (v, w) in weights.iter().enumerate() {
            joint_regressor[[k, v]] = f32_round(w / total);
        }
    }

    let mut skin_weights = Array2::zeros((n_vertices, n_joints));
    for (v, d) in dirs.iter().enumerate() {
        let lower_front = -0.7 * d[1] + 0.3 * d[2];
        let jaw = f32_round(((lower_front - 0.1) / 0.5).clamp(0.0, 1.0));
        skin_weights[[v, 1]] = jaw;
        skin_weights[[v, 0]] = f32_round(1.0 - jaw);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis = |rank: usize, scale: f64, lower_bias: bool| {
        let mut b = Array2::zeros((3 * n_vertices, rank));
        for v in 0..n_vertices {
            // expression displacements concentrate on the lower face
            let gain = if lower_bias {
                0.3 + 0.7 * (0.5 - 0.5 * dirs[v][1])
            } else {
                1.0
            };
            for c in 0..3 {
                for i in 0..rank {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    b[[3 * v + c, i]] = f32_round(z * scale * gain);
                }
            }
        }
        b
    };
    let shape_basis = basis(shape_rank, 0.004, false);
    let expr_basis = basis(expr_rank, 0.003, true);

    let mut parents = vec![-1i64];
    parents.extend(std::iter::repeat_n(0, n_joints - 1));
    let mut joint_names = vec!["neck".to_string(), "jaw".to_string()];
    for j in 2..n_joints {
        joint_names.push(format!("eye{}", j - 2));
    }

    HeadRig::new(
        template,
        faces,
        shape_basis,
        expr_basis,
        joint_regressor,
        skin_weights,
        parents,
        joint_names,
        1,
        0,
    )
}

fn f32_round(x: f64) -> f64 {
    x as f32 as f64
}
