use std::sync::Arc;

use ndarray::{Array2, ArrayView1};

use super::params::FlameParams;
use super::rig::HeadRig;
use super::rotation::{apply, mul, rodrigues, Mat3, IDENTITY};
use crate::error::{Error, Result};

/// Vertex positions plus the (shared) triangle list of the producing rig.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Array2<f64>,
    pub faces: Arc<Vec<[u32; 3]>>,
}

/// Template plus linear shape and expression offsets (V×3).
pub fn blend_shapes(rig: &HeadRig, beta: &[f64], psi: &[f64]) -> Result<Array2<f64>> {
    if beta.len() != rig.shape_rank() {
        return Err(Error::shape("blend_shapes beta", rig.shape_rank(), beta.len()));
    }
    if psi.len() != rig.expr_rank() {
        return Err(Error::shape("blend_shapes psi", rig.expr_rank(), psi.len()));
    }
    let offsets = rig.shape_basis().dot(&ArrayView1::from(beta)) + rig.expr_basis().dot(&ArrayView1::from(psi));
    let offsets = offsets
        .into_shape_with_order((rig.n_vertices(), 3))
        .expect("basis rows are 3V");
    Ok(rig.template() + &offsets)
}

/// Linear blend skinning of `intermediate` by the six pose parameters.
///
/// Joints come from the regressor applied to the rig template. The global
/// head rotation acts at the rig's head joint and the jaw rotation at its jaw
/// joint; all other joints carry the identity. Each vertex moves by the
/// skin-weighted sum of per-joint rigid displacements, so a zero pose leaves
/// the input untouched.
pub fn lbs(rig: &HeadRig, intermediate: &Array2<f64>, theta: &[f64; 6]) -> Result<Mesh> {
    if intermediate.dim() != (rig.n_vertices(), 3) {
        return Err(Error::shape(
            "lbs intermediate",
            format!("({}, 3)", rig.n_vertices()),
            format!("{:?}", intermediate.dim()),
        ));
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lbs theta".into()));
    }
    let (head, jaw) = split_pose(theta);
    let joints = rig.rest_joints();
    let k = rig.n_joints();

    let mut global: Vec<Mat3> = vec![IDENTITY; k];
    // posed joint location minus rest location
    let mut offset = vec![[0.0f64; 3]; k];
    for &j in rig.traversal_order() {
        let local = if j == rig.head_joint() {
            rodrigues(head)
        } else if j == rig.jaw_joint() {
            rodrigues(jaw)
        } else {
            IDENTITY
        };
        let parent = rig.parents()[j];
        if parent < 0 {
            global[j] = local;
        } else {
            let p = parent as usize;
            global[j] = mul(&global[p], &local);
            let bone = [
                joints[[j, 0]] - joints[[p, 0]],
                joints[[j, 1]] - joints[[p, 1]],
                joints[[j, 2]] - joints[[p, 2]],
            ];
            let turned = apply(&minus_identity(&global[p]), bone);
            offset[j] = [
                offset[p][0] + turned[0],
                offset[p][1] + turned[1],
                offset[p][2] + turned[2],
            ];
        }
    }

    // displacement of x under joint j: (G_j - I)(x - J_j) + o_j = M_j x + c_j
    let linear: Vec<Mat3> = global.iter().map(minus_identity).collect();
    let constant: Vec<[f64; 3]> = (0..k)
        .map(|j| {
            let mj = apply(&linear[j], [joints[[j, 0]], joints[[j, 1]], joints[[j, 2]]]);
            [offset[j][0] - mj[0], offset[j][1] - mj[1], offset[j][2] - mj[2]]
        })
        .collect();

    let weights = rig.skin_weights();
    let mut out = intermediate.clone();
    for (v, mut row) in out.rows_mut().into_iter().enumerate() {
        let x = [row[0], row[1], row[2]];
        let mut disp = [0.0; 3];
        for j in 0..k {
            let w = weights[[v, j]];
            if w == 0.0 {
                continue;
            }
            let mx = apply(&linear[j], x);
            for c in 0..3 {
                disp[c] += w * (mx[c] + constant[j][c]);
            }
        }
        for c in 0..3 {
            row[c] += disp[c];
        }
    }
    Ok(Mesh {
        vertices: out,
        faces: Arc::clone(rig.faces()),
    })
}

fn minus_identity(m: &Mat3) -> Mat3 {
    let mut out = *m;
    for (i, row) in out.iter_mut().enumerate() {
        row[i] -= 1.0;
    }
    out
}

/// Coarse mesh for one parameter frame. The detail coefficients are ignored.
///
/// When a rig's basis rank differs from the canonical coefficient count, the
/// leading coefficients are used and missing ones read as zero.
pub fn decode(rig: &HeadRig, params: &FlameParams) -> Result<Mesh> {
    params.validate()?;
    let beta = fit_coefficients(&params.beta, rig.shape_rank());
    let psi = fit_coefficients(&params.psi, rig.expr_rank());
    let intermediate = blend_shapes(rig, &beta, &psi)?;
    lbs(rig, &intermediate, &params.theta)
}

/// Coarse decode followed by an externally supplied per-vertex displacement.
pub fn decode_with_detail(rig: &HeadRig, params: &FlameParams, displacement: Option<&Array2<f64>>) -> Result<Mesh> {
    let mut mesh = decode(rig, params)?;
    if let Some(d) = displacement {
        if d.dim() != mesh.vertices.dim() {
            return Err(Error::shape(
                "decode_with_detail displacement",
                format!("{:?}", mesh.vertices.dim()),
                format!("{:?}", d.dim()),
            ));
        }
        mesh.vertices += d;
    }
    Ok(mesh)
}

fn fit_coefficients(coeffs: &[f64], rank: usize) -> Vec<f64> {
    let mut out = vec![0.0; rank];
    let n = rank.min(coeffs.len());
    out[..n].copy_from_slice(&coeffs[..n]);
    out
}

/// Splits the six pose entries into (head rotation, jaw rotation).
pub fn split_pose(theta: &[f64; 6]) -> ([f64; 3], [f64; 3]) {
    ([theta[0], theta[1], theta[2]], [theta[3], theta[4], theta[5]])
}

pub fn join_pose(head: [f64; 3], jaw: [f64; 3]) -> [f64; 6] {
    [head[0], head[1], head[2], jaw[0], jaw[1], jaw[2]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flame::{synthetic_rig, SyntheticRigSpec};
    use proptest::prelude::*;

    fn rig() -> HeadRig {
        synthetic_rig(SyntheticRigSpec::default()).unwrap()
    }

    #[test]
    fn zero_coefficients_give_template() {
        let rig = rig();
        let v = blend_shapes(&rig, &[0.0; 4], &[0.0; 4]).unwrap();
        assert_eq!(&v, rig.template());
    }

    #[test]
    fn single_basis_activation() {
        let rig = rig();
        let v = blend_shapes(&rig, &[0.0, 0.0, 0.0, 1.0], &[0.0; 4]).unwrap();
        for vert in 0..rig.n_vertices() {
            for c in 0..3 {
                let expected = rig.template()[[vert, c]] + rig.shape_basis()[[3 * vert + c, 3]];
                assert_eq!(v[[vert, c]], expected);
            }
        }
    }

    #[test]
    fn coefficient_length_mismatch_is_reported() {
        let err = blend_shapes(&rig(), &[0.0; 3], &[0.0; 4]).unwrap_err();
        assert!(err.to_string().contains("beta"), "{err}");
    }

    #[test]
    fn zero_pose_is_identity_skinning() {
        let rig = rig();
        let v = blend_shapes(&rig, &[0.3, -1.0, 0.2, 0.5], &[1.0, 0.0, -2.0, 0.1]).unwrap();
        let mesh = lbs(&rig, &v, &[0.0; 6]).unwrap();
        assert_eq!(mesh.vertices, v);
    }

    #[test]
    fn decode_zero_params_is_template() {
        let rig = rig();
        let mesh = decode(&rig, &FlameParams::zeros()).unwrap();
        assert_eq!(&mesh.vertices, rig.template());
        assert_eq!(mesh.faces.len(), rig.faces().len());
    }

    #[test]
    fn detail_hook_adds_displacement() {
        let rig = rig();
        let d = Array2::from_elem((12, 3), 0.001);
        let base = decode(&rig, &FlameParams::zeros()).unwrap();
        let detailed = decode_with_detail(&rig, &FlameParams::zeros(), Some(&d)).unwrap();
        assert_eq!(detailed.vertices, base.vertices + &d);
        assert!(decode_with_detail(&rig, &FlameParams::zeros(), Some(&Array2::zeros((3, 3)))).is_err());
    }

    #[test]
    fn split_and_join() {
        let theta = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let (head, jaw) = split_pose(&theta);
        assert_eq!(head, [1.0, 2.0, 3.0]);
        assert_eq!(jaw, [4.0, 5.0, 6.0]);
        assert_eq!(split_pose(&[0.0; 6]), ([0.0; 3], [0.0; 3]));
    }

    proptest! {
        #[test]
        fn split_join_round_trip(theta in proptest::array::uniform6(-3.0f64..3.0)) {
            let (h, j) = split_pose(&theta);
            prop_assert_eq!(join_pose(h, j), theta);
        }

        #[test]
        fn blendshapes_are_linear(beta in proptest::array::uniform4(-2.0f64..2.0), a in -3.0f64..3.0) {
            let rig = rig();
            let base = blend_shapes(&rig, &beta, &[0.0; 4]).unwrap() - rig.template();
            let scaled: Vec<f64> = beta.iter().map(|b| a * b).collect();
            let lhs = blend_shapes(&rig, &scaled, &[0.0; 4]).unwrap() - rig.template();
            for (l, r) in lhs.iter().zip(base.iter()) {
                prop_assert!((l - a * r).abs() < 1e-10);
            }
        }
    }
}
