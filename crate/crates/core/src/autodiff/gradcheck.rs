//! Central finite-difference verification of analytic gradients.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Axis, Graph, GraphError, Matrix, NodeId};

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub op_name: String,
    pub max_relative_error: f64,
    /// One relative error per input entry, inputs in order.
    pub errors: Vec<f64>,
    pub pass: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the analytic gradient of `build` with respect to every entry of
/// every input against central differences with step [`FD_STEP`].
///
/// `build` receives the inputs as trainable leaves and must return a `1 x 1`
/// node.
pub fn grad_check<F>(
    op_name: &str,
    inputs: &[Matrix],
    tol: f64,
    build: F,
) -> Result<GradCheckReport, GraphError>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId, GraphError>,
{
    let evaluate = |values: &[Matrix]| -> Result<f64, GraphError> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = values.iter().map(|m| g.param(m.clone())).collect();
        let out = build(&mut g, &ids)?;
        let shape = g.shape(out);
        if shape != (1, 1) {
            return Err(GraphError::NotScalar(shape));
        }
        Ok(g.value(out).get(0, 0))
    };

    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|m| g.param(m.clone())).collect();
    let out = build(&mut g, &ids)?;
    g.backward(out)?;

    let mut errors = Vec::new();
    let mut work: Vec<Matrix> = inputs.to_vec();
    for (which, &id) in ids.iter().enumerate() {
        let analytic = g
            .grad(id)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(inputs[which].rows(), inputs[which].cols()));
        for k in 0..inputs[which].len() {
            let original = inputs[which].data()[k];
            work[which].data_mut()[k] = original + FD_STEP;
            let plus = evaluate(&work)?;
            work[which].data_mut()[k] = original - FD_STEP;
            let minus = evaluate(&work)?;
            work[which].data_mut()[k] = original;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            errors.push(relative_error(analytic.data()[k], numeric));
        }
    }
    let max_relative_error = errors.iter().copied().fold(0.0, f64::max);
    Ok(GradCheckReport {
        op_name: op_name.to_string(),
        max_relative_error,
        errors,
        pass: max_relative_error < tol,
    })
}

pub fn random_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::uniform(rows, cols, 1.0, rng)
}

/// Reduces `out` to a scalar with fixed random weights so that every output
/// entry carries a distinct upstream gradient.
fn weighted_sum(g: &mut Graph, out: NodeId, seed: u64) -> Result<NodeId, GraphError> {
    let (r, c) = g.shape(out);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w = g.constant(random_matrix(r, c, &mut rng));
    let prod = g.mul(out, w)?;
    g.sum(prod)
}

/// Gradient reversal is deliberately not the derivative of its forward map:
/// the analytic gradient must equal `-lambda` times the finite-difference
/// gradient of the same expression.
fn check_grad_reverse(
    x: &Matrix,
    lambda: f64,
    seed: u64,
    tol: f64,
) -> Result<GradCheckReport, GraphError> {
    let forward = grad_check("grad_reverse_forward", std::slice::from_ref(x), tol, |g, ids| {
        weighted_sum(g, ids[0], seed)
    })?;
    let mut g = Graph::new();
    let xi = g.param(x.clone());
    let r = g.grad_reverse(xi, lambda)?;
    let l = weighted_sum(&mut g, r, seed)?;
    g.backward(l)?;
    let analytic = g.grad(xi).cloned().unwrap_or_else(|| Matrix::zeros(x.rows(), x.cols()));

    // Central differences of the forward expression sum(w * x).
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w = random_matrix(x.rows(), x.cols(), &mut rng);
    let mut errors = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus.data_mut()[k] += FD_STEP;
        minus.data_mut()[k] -= FD_STEP;
        let f = |m: &Matrix| m.data().iter().zip(w.data()).map(|(a, b)| a * b).sum::<f64>();
        let numeric = (f(&plus) - f(&minus)) / (2.0 * FD_STEP);
        errors.push(relative_error(analytic.data()[k], -lambda * numeric));
    }
    let max_relative_error = errors
        .iter()
        .copied()
        .fold(forward.max_relative_error, f64::max);
    Ok(GradCheckReport {
        op_name: "grad_reverse".to_string(),
        max_relative_error,
        errors,
        pass: max_relative_error < tol,
    })
}

/// Checks each primitive of the graph on random inputs drawn from `seed`.
pub fn check_primitives(seed: u64, tol: f64) -> Result<Vec<GradCheckReport>, GraphError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::new();
    let a34 = random_matrix(3, 4, &mut rng);
    let b34 = random_matrix(3, 4, &mut rng);
    let b45 = random_matrix(4, 5, &mut rng);
    let bias35 = random_matrix(3, 5, &mut rng);
    let row5 = random_matrix(1, 5, &mut rng);
    let col3 = random_matrix(3, 1, &mut rng);
    let pos34 = a34.map(|v| v.abs() + 0.5);
    let c24 = random_matrix(2, 4, &mut rng);
    let mask: Arc<Vec<bool>> = Arc::new((0..12).map(|i| i % 4 != (i / 4) + 1).collect());
    let slope = 0.2;

    macro_rules! check {
        ($name:expr, $inputs:expr, |$g:ident, $x:ident| $body:expr) => {{
            let report = grad_check($name, $inputs, tol, |$g: &mut Graph, $x: &[NodeId]| {
                let out = $body?;
                weighted_sum($g, out, seed)
            })?;
            reports.push(report);
        }};
    }

    check!("matmul", &[a34.clone(), b45.clone()], |g, x| g.matmul(x[0], x[1]));
    check!("affine_full", &[a34.clone(), b45.clone(), bias35.clone()], |g, x| g
        .affine(x[0], x[1], x[2]));
    check!("affine_row", &[a34.clone(), b45.clone(), row5.clone()], |g, x| g
        .affine(x[0], x[1], x[2]));
    check!("affine_col", &[a34.clone(), b45.clone(), col3.clone()], |g, x| g
        .affine(x[0], x[1], x[2]));
    check!("transpose", &[a34.clone()], |g, x| g.transpose(x[0]));
    check!("add", &[a34.clone(), b34.clone()], |g, x| g.add(x[0], x[1]));
    check!("sub", &[a34.clone(), b34.clone()], |g, x| g.sub(x[0], x[1]));
    check!("mul", &[a34.clone(), b34.clone()], |g, x| g.mul(x[0], x[1]));
    check!("concat_rows", &[a34.clone(), c24.clone()], |g, x| g
        .concat_rows(&[x[0], x[1]]));
    check!("concat_cols", &[a34.clone(), col3.clone()], |g, x| g
        .concat_cols(&[x[0], x[1]]));
    check!("softmax_rows", &[a34.clone()], |g, x| g.softmax(x[0], Axis::Rows));
    check!("softmax_cols", &[a34.clone()], |g, x| g.softmax(x[0], Axis::Cols));
    check!("masked_softmax", &[a34.clone()], |g, x| g
        .masked_softmax(x[0], Axis::Cols, mask.clone()));
    check!("sigmoid", &[a34.clone()], |g, x| g.sigmoid(x[0]));
    check!("tanh", &[a34.clone()], |g, x| g.tanh(x[0]));
    check!("leaky_relu", &[a34.clone()], |g, x| g.leaky_relu(x[0], slope));
    check!("exp", &[a34.clone()], |g, x| g.exp(x[0]));
    check!("log", &[pos34.clone()], |g, x| g.log(x[0]));
    check!("mean_rows", &[a34.clone()], |g, x| g.mean(x[0], Axis::Rows));
    check!("mean_cols", &[a34.clone()], |g, x| g.mean(x[0], Axis::Cols));
    check!("sum", &[a34.clone()], |g, x| g.sum(x[0]));
    check!("scale", &[a34.clone()], |g, x| g.scale(x[0], -1.7));
    check!("select_rows", &[a34.clone()], |g, x| g.select_rows(x[0], &[2, 0, 2]));
    check!("select_cols", &[a34.clone()], |g, x| g.select_cols(x[0], &[3, 1, 1]));
    check!("gather", &[a34.clone()], |g, x| g
        .gather(x[0], &[(0, 1), (2, 3), (0, 1)]));
    check!("reshape", &[a34.clone()], |g, x| g.reshape(x[0], 2, 6));
    reports.push(check_grad_reverse(&a34, 0.7, seed, tol)?);
    Ok(reports)
}
