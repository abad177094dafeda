//! Illumination guidance and multiscale feature fusion as verifiable
//! forward/backward kernels.
//!
//! The fusion block runs three parallel convolutions (1x1, 3x3, 5x5) over
//! the guidance-augmented input, scores each scale with a pointwise linear
//! map, and normalizes the scores with a softmax taken *across the three
//! scales* at every position and channel. That normalization is the one
//! consequential interpretation in this module: it makes the fused feature
//! a convex combination of the branch features, so the scale weights sum to
//! one everywhere and actually compete. A final 1x1 convolution restores
//! the input channel count.
//!
//! Kernels are generic over `f32`/`f64`; gradient checking runs on `f64`.

pub mod conv;
pub mod params_io;

use ndarray::{Array1, Array2, Array3, Axis};
use rand::Rng;
use thiserror::Error;

use crate::plane::ImagePlane;
use crate::seed;
pub use conv::{conv2d_same, conv2d_same_backward, ConvKernel};

/// Element type the kernels are generic over.
pub trait Scalar:
    num_traits::Float + std::ops::AddAssign + std::ops::SubAssign + std::fmt::Debug + 'static
{
}
impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("dimensions do not agree: {what}")]
    DimMismatch { what: String },
    #[error("expected 3 channels, got {got}")]
    WrongChannelCount { got: usize },
    #[error("tape does not match this call: {what}")]
    TapeMismatch { what: String },
    #[error("invalid fusion parameters: {what}")]
    InvalidParams { what: String },
}

/// Branch kernel sizes, smallest to largest receptive field.
pub const BRANCH_KERNEL_SIZES: [usize; 3] = [1, 3, 5];

/// Pointwise linear map `c_mid -> c_mid` scoring one scale.
#[derive(Debug, Clone)]
pub struct PointwiseLinear<T> {
    /// `(c_out, c_in)`
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> PointwiseLinear<T> {
    pub fn zeros(c: usize) -> Self {
        PointwiseLinear {
            weight: Array2::zeros((c, c)),
            bias: Array1::zeros(c),
        }
    }
}

/// All learnable weights of the fusion block.
///
/// Gradients reuse this struct: the backward pass returns a
/// `FusionParams`-shaped container holding one partial derivative per
/// parameter slot.
#[derive(Debug, Clone)]
pub struct FusionParams<T> {
    /// 1x1, 3x3, 5x5 convolutions mapping `c_in -> c_mid`.
    pub branches: [ConvKernel<T>; 3],
    /// Per-scale pointwise scoring maps `c_mid -> c_mid`.
    pub attention: [PointwiseLinear<T>; 3],
    /// Final 1x1 convolution mapping `c_mid -> c_out`.
    pub projection: ConvKernel<T>,
}

impl<T: Scalar> FusionParams<T> {
    pub fn zeros(c_in: usize, c_mid: usize, c_out: usize) -> Self {
        FusionParams {
            branches: [
                ConvKernel::zeros(c_mid, c_in, 1),
                ConvKernel::zeros(c_mid, c_in, 3),
                ConvKernel::zeros(c_mid, c_in, 5),
            ],
            attention: [
                PointwiseLinear::zeros(c_mid),
                PointwiseLinear::zeros(c_mid),
                PointwiseLinear::zeros(c_mid),
            ],
            projection: ConvKernel::zeros(c_out, c_mid, 1),
        }
    }

    /// Deterministic initialization used by tests and the parameter-file
    /// tooling: every weight uniform in (-0.1, 0.1) drawn in flatten order,
    /// every bias zero.
    pub fn seeded(c_in: usize, c_mid: usize, c_out: usize, seed_value: u64) -> Self {
        let mut params = Self::zeros(c_in, c_mid, c_out);
        let mut rng = seed::rng_from(seed_value);
        let mut draw = |target: &mut [T]| {
            for v in target {
                *v = T::from(rng.gen_range(-0.1..0.1)).expect("f64 fits scalar");
            }
        };
        for branch in &mut params.branches {
            draw(branch.weight.as_slice_mut().expect("contiguous"));
        }
        for att in &mut params.attention {
            draw(att.weight.as_slice_mut().expect("contiguous"));
        }
        draw(params.projection.weight.as_slice_mut().expect("contiguous"));
        params
    }

    /// `(c_in, c_mid, c_out)`
    pub fn channels(&self) -> (usize, usize, usize) {
        (
            self.branches[0].c_in(),
            self.branches[0].c_out(),
            self.projection.c_out(),
        )
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        let (c_in, c_mid, _) = self.channels();
        for (branch, expected) in self.branches.iter().zip(BRANCH_KERNEL_SIZES) {
            if branch.kernel_size() != expected {
                return Err(FusionError::InvalidParams {
                    what: format!(
                        "branch kernel size {} where {expected} was expected",
                        branch.kernel_size()
                    ),
                });
            }
            if branch.c_in() != c_in || branch.c_out() != c_mid {
                return Err(FusionError::InvalidParams {
                    what: "branch channel counts disagree".into(),
                });
            }
        }
        for att in &self.attention {
            if att.weight.dim() != (c_mid, c_mid) || att.bias.len() != c_mid {
                return Err(FusionError::InvalidParams {
                    what: "attention maps must be square over the branch channels".into(),
                });
            }
        }
        if self.projection.kernel_size() != 1 || self.projection.c_in() != c_mid {
            return Err(FusionError::InvalidParams {
                what: "projection must be 1x1 over the branch channels".into(),
            });
        }
        Ok(())
    }

    /// Total parameter count for the given channel configuration.
    pub fn value_count(c_in: usize, c_mid: usize, c_out: usize) -> usize {
        let branch: usize = BRANCH_KERNEL_SIZES
            .iter()
            .map(|k| c_mid * c_in * k * k + c_mid)
            .sum();
        let attention = 3 * (c_mid * c_mid + c_mid);
        let projection = c_out * c_mid + c_out;
        branch + attention + projection
    }

    /// Serialize every parameter in a fixed order: for each branch kernel
    /// (1, 3, 5) its weights row-major then bias; for each scale its
    /// attention weights then bias; projection weights then bias.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        for branch in &self.branches {
            out.extend(branch.weight.iter().copied());
            out.extend(branch.bias.iter().copied());
        }
        for att in &self.attention {
            out.extend(att.weight.iter().copied());
            out.extend(att.bias.iter().copied());
        }
        out.extend(self.projection.weight.iter().copied());
        out.extend(self.projection.bias.iter().copied());
        out
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn from_flat(
        c_in: usize,
        c_mid: usize,
        c_out: usize,
        values: &[T],
    ) -> Result<Self, FusionError> {
        let expected = Self::value_count(c_in, c_mid, c_out);
        if values.len() != expected {
            return Err(FusionError::InvalidParams {
                what: format!("{} values where {expected} were expected", values.len()),
            });
        }
        let mut params = Self::zeros(c_in, c_mid, c_out);
        let mut cursor = 0usize;
        let take = |target: &mut [T], cursor: &mut usize| {
            target.copy_from_slice(&values[*cursor..*cursor + target.len()]);
            *cursor += target.len();
        };
        for branch in &mut params.branches {
            take(branch.weight.as_slice_mut().expect("contiguous"), &mut cursor);
            take(branch.bias.as_slice_mut().expect("contiguous"), &mut cursor);
        }
        for att in &mut params.attention {
            take(att.weight.as_slice_mut().expect("contiguous"), &mut cursor);
            take(att.bias.as_slice_mut().expect("contiguous"), &mut cursor);
        }
        take(
            params.projection.weight.as_slice_mut().expect("contiguous"),
            &mut cursor,
        );
        take(
            params.projection.bias.as_slice_mut().expect("contiguous"),
            &mut cursor,
        );
        Ok(params)
    }

    /// Convert element type, e.g. `f32` file parameters to `f64` checking.
    pub fn cast<U: Scalar>(&self) -> FusionParams<U> {
        let (c_in, c_mid, c_out) = self.channels();
        let values: Vec<U> = self
            .flatten()
            .into_iter()
            .map(|v| U::from(v).expect("float cast"))
            .collect();
        FusionParams::from_flat(c_in, c_mid, c_out, &values).expect("same layout")
    }
}

/// Cached intermediates from one forward call, consumed by the backward
/// pass.
#[derive(Debug, Clone)]
pub struct FusionTape<T> {
    pub input: Array3<T>,
    pub branch_outputs: [Array3<T>; 3],
    pub logits: [Array3<T>; 3],
    pub scale_weights: [Array3<T>; 3],
    pub fused: Array3<T>,
}

/// Channel mean of a 3-channel plane: the grayscale guidance signal.
/// The mean is taken in f64 so the stored f32 is correct to a rounding.
pub fn illumination_guidance(night: &ImagePlane) -> Result<ImagePlane, FusionError> {
    let (h, w, channels) = night.dim();
    if channels != 3 {
        return Err(FusionError::WrongChannelCount { got: channels });
    }
    let mut out = Array3::zeros((h, w, 1));
    for y in 0..h {
        for x in 0..w {
            let sum = night[[y, x, 0]] as f64 + night[[y, x, 1]] as f64 + night[[y, x, 2]] as f64;
            out[[y, x, 0]] = (sum / 3.0) as f32;
        }
    }
    Ok(out)
}

/// Concatenate two planes along the channel axis; spatial dims must agree.
pub fn concat_aux<T: Scalar>(
    image: &Array3<T>,
    guidance: &Array3<T>,
) -> Result<Array3<T>, FusionError> {
    let (h, w, _) = image.dim();
    let (gh, gw, _) = guidance.dim();
    if (h, w) != (gh, gw) {
        return Err(FusionError::DimMismatch {
            what: format!("image is {h}x{w}, guidance is {gh}x{gw}"),
        });
    }
    ndarray::concatenate(Axis(2), &[image.view(), guidance.view()]).map_err(|e| {
        FusionError::DimMismatch {
            what: e.to_string(),
        }
    })
}

fn pointwise_forward<T: Scalar>(features: &Array3<T>, map: &PointwiseLinear<T>) -> Array3<T> {
    let (h, w, c) = features.dim();
    let mut out = Array3::zeros((h, w, c));
    for y in 0..h {
        for x in 0..w {
            for oc in 0..c {
                let mut acc = map.bias[oc];
                for ci in 0..c {
                    acc += map.weight[[oc, ci]] * features[[y, x, ci]];
                }
                out[[y, x, oc]] = acc;
            }
        }
    }
    out
}

/// Forward pass: branch convolutions, per-scale scores, cross-scale
/// softmax, convex fusion, 1x1 projection back to the input channel count.
pub fn fusion_forward<T: Scalar>(
    input: &Array3<T>,
    params: &FusionParams<T>,
) -> Result<(Array3<T>, FusionTape<T>), FusionError> {
    params.validate()?;
    let (h, w, channels) = input.dim();
    let (c_in, c_mid, _) = params.channels();
    if channels != c_in {
        return Err(FusionError::DimMismatch {
            what: format!("input has {channels} channels, parameters expect {c_in}"),
        });
    }

    let branch_outputs = [
        conv2d_same(input, &params.branches[0]),
        conv2d_same(input, &params.branches[1]),
        conv2d_same(input, &params.branches[2]),
    ];
    let logits = [
        pointwise_forward(&branch_outputs[0], &params.attention[0]),
        pointwise_forward(&branch_outputs[1], &params.attention[1]),
        pointwise_forward(&branch_outputs[2], &params.attention[2]),
    ];

    let mut scale_weights = [
        Array3::zeros((h, w, c_mid)),
        Array3::zeros((h, w, c_mid)),
        Array3::zeros((h, w, c_mid)),
    ];
    for y in 0..h {
        for x in 0..w {
            for c in 0..c_mid {
                let l = [
                    logits[0][[y, x, c]],
                    logits[1][[y, x, c]],
                    logits[2][[y, x, c]],
                ];
                let m = l[0].max(l[1]).max(l[2]);
                let e = [(l[0] - m).exp(), (l[1] - m).exp(), (l[2] - m).exp()];
                let total = e[0] + e[1] + e[2];
                for i in 0..3 {
                    scale_weights[i][[y, x, c]] = e[i] / total;
                }
            }
        }
    }

    let mut fused = Array3::zeros((h, w, c_mid));
    for i in 0..3 {
        ndarray::Zip::from(&mut fused)
            .and(&scale_weights[i])
            .and(&branch_outputs[i])
            .for_each(|f, &a, &e| *f += a * e);
    }

    let output = conv2d_same(&fused, &params.projection);
    let tape = FusionTape {
        input: input.clone(),
        branch_outputs,
        logits,
        scale_weights,
        fused,
    };
    Ok((output, tape))
}

/// Backward pass: exact analytic gradients of a scalar loss with gradient
/// `grad_output` with respect to the input and every parameter, including
/// the cross-scale softmax Jacobian.
pub fn fusion_backward<T: Scalar>(
    params: &FusionParams<T>,
    tape: &FusionTape<T>,
    grad_output: &Array3<T>,
) -> Result<(Array3<T>, FusionParams<T>), FusionError> {
    params.validate()?;
    let (c_in, c_mid, c_out) = params.channels();
    let (h, w, tape_c) = tape.input.dim();
    if tape_c != c_in {
        return Err(FusionError::TapeMismatch {
            what: format!("tape input has {tape_c} channels, parameters expect {c_in}"),
        });
    }
    for plane in tape
        .branch_outputs
        .iter()
        .chain(tape.logits.iter())
        .chain(tape.scale_weights.iter())
    {
        if plane.dim() != (h, w, c_mid) {
            return Err(FusionError::TapeMismatch {
                what: "cached intermediates do not share the forward dims".into(),
            });
        }
    }
    if tape.fused.dim() != (h, w, c_mid) {
        return Err(FusionError::TapeMismatch {
            what: "fused cache does not share the forward dims".into(),
        });
    }
    if grad_output.dim() != (h, w, c_out) {
        return Err(FusionError::TapeMismatch {
            what: format!(
                "gradient is {:?}, forward output was {:?}",
                grad_output.dim(),
                (h, w, c_out)
            ),
        });
    }

    let mut grads = FusionParams::zeros(c_in, c_mid, c_out);

    // projection
    let (grad_fused, grad_projection) =
        conv2d_same_backward(&tape.fused, &params.projection, grad_output);
    grads.projection = grad_projection;

    // fusion: fused = sum_i alpha_i * E_i
    let grad_alpha: [Array3<T>; 3] = [
        &grad_fused * &tape.branch_outputs[0],
        &grad_fused * &tape.branch_outputs[1],
        &grad_fused * &tape.branch_outputs[2],
    ];

    // softmax across the scale index: dL/dl_i = a_i (g_i - sum_j g_j a_j)
    let mut weighted: Array3<T> = Array3::zeros((h, w, c_mid));
    for (alpha, weights) in grad_alpha.iter().zip(&tape.scale_weights) {
        ndarray::Zip::from(&mut weighted)
            .and(alpha)
            .and(weights)
            .for_each(|acc, &g, &a| *acc += g * a);
    }
    let mut grad_logits: [Array3<T>; 3] = [
        Array3::zeros((h, w, c_mid)),
        Array3::zeros((h, w, c_mid)),
        Array3::zeros((h, w, c_mid)),
    ];
    for ((logit, alpha), weights) in grad_logits
        .iter_mut()
        .zip(&grad_alpha)
        .zip(&tape.scale_weights)
    {
        ndarray::Zip::from(logit)
            .and(alpha)
            .and(weights)
            .and(&weighted)
            .for_each(|out, &g, &a, &sum| *out = a * (g - sum));
    }

    let mut grad_input = Array3::zeros((h, w, c_in));
    // one index walks five parallel per-scale containers here
    #[allow(clippy::needless_range_loop)]
    for i in 0..3 {
        // attention pointwise map adjoint
        let mut grad_branch = &grad_fused * &tape.scale_weights[i];
        for y in 0..h {
            for x in 0..w {
                for oc in 0..c_mid {
                    let g = grad_logits[i][[y, x, oc]];
                    grads.attention[i].bias[oc] += g;
                    for ci in 0..c_mid {
                        grads.attention[i].weight[[oc, ci]] +=
                            g * tape.branch_outputs[i][[y, x, ci]];
                        grad_branch[[y, x, ci]] += g * params.attention[i].weight[[oc, ci]];
                    }
                }
            }
        }
        // branch convolution adjoint
        let (gx, gk) = conv2d_same_backward(&tape.input, &params.branches[i], &grad_branch);
        grads.branches[i] = gk;
        grad_input += &gx;
    }

    Ok((grad_input, grads))
}

/// Outcome of an analytic-vs-finite-difference comparison.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Worst error over every parameter and input slot. Relative where the
    /// larger of the two gradients exceeds 1e-4, absolute below that.
    pub max_rel_error: f64,
    pub slots_checked: usize,
    pub tolerance: f64,
    pub passed: bool,
    /// Human-readable address of the worst slot.
    pub worst_slot: String,
}

const FD_STEP: f64 = 1e-4;
const REL_DENOM_FLOOR: f64 = 1e-4;

fn loss_for(params: &FusionParams<f64>, input: &Array3<f64>) -> f64 {
    let (output, _) = fusion_forward(input, params).expect("dims validated by caller");
    output.iter().sum()
}

/// Compare analytic gradients against central finite differences for every
/// parameter and every input element, with loss `L = sum(output)`.
pub fn grad_check(
    params: &FusionParams<f64>,
    input: &Array3<f64>,
    tolerance: f64,
) -> GradCheckReport {
    let (c_in, c_mid, c_out) = params.channels();
    let (h, w, _) = input.dim();

    let (output, tape) = fusion_forward(input, params).expect("consistent dims");
    let ones = Array3::from_elem(output.dim(), 1.0);
    let (grad_input, grad_params) =
        fusion_backward(params, &tape, &ones).expect("matching tape");

    let analytic_params = grad_params.flatten();
    let mut flat = params.flatten();
    let mut max_err = 0.0f64;
    let mut worst = String::from("none");
    let mut slots = 0usize;

    let record = |analytic: f64, fd: f64, label: String, max_err: &mut f64, worst: &mut String| {
        let denom = analytic.abs().max(fd.abs()).max(REL_DENOM_FLOOR);
        let err = (analytic - fd).abs() / denom;
        if err > *max_err {
            *max_err = err;
            *worst = label;
        }
    };

    for i in 0..flat.len() {
        let saved = flat[i];
        flat[i] = saved + FD_STEP;
        let up = loss_for(
            &FusionParams::from_flat(c_in, c_mid, c_out, &flat).expect("layout"),
            input,
        );
        flat[i] = saved - FD_STEP;
        let down = loss_for(
            &FusionParams::from_flat(c_in, c_mid, c_out, &flat).expect("layout"),
            input,
        );
        flat[i] = saved;
        let fd = (up - down) / (2.0 * FD_STEP);
        record(
            analytic_params[i],
            fd,
            format!("param[{i}]"),
            &mut max_err,
            &mut worst,
        );
        slots += 1;
    }

    let mut probe = input.clone();
    for y in 0..h {
        for x in 0..w {
            for c in 0..c_in {
                let saved = probe[[y, x, c]];
                probe[[y, x, c]] = saved + FD_STEP;
                let up = loss_for(params, &probe);
                probe[[y, x, c]] = saved - FD_STEP;
                let down = loss_for(params, &probe);
                probe[[y, x, c]] = saved;
                let fd = (up - down) / (2.0 * FD_STEP);
                record(
                    grad_input[[y, x, c]],
                    fd,
                    format!("input[{y},{x},{c}]"),
                    &mut max_err,
                    &mut worst,
                );
                slots += 1;
            }
        }
    }

    GradCheckReport {
        max_rel_error: max_err,
        slots_checked: slots,
        tolerance,
        passed: max_err < tolerance,
        worst_slot: worst,
    }
}
