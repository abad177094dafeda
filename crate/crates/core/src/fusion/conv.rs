//! Same-size 2D convolution with zero padding, forward and backward.
//!
//! Planes are `H x W x C`, kernels are `(C_out, C_in, k, k)` with odd `k`.
//! The backward pass mirrors the forward loop, accumulating the adjoints of
//! input, weights, and bias in one sweep.

use ndarray::{Array1, Array3, Array4};

use super::Scalar;

/// Convolution weights and bias for one branch.
#[derive(Debug, Clone)]
pub struct ConvKernel<T> {
    /// `(c_out, c_in, k, k)`
    pub weight: Array4<T>,
    /// `(c_out)`
    pub bias: Array1<T>,
}

impl<T: Scalar> ConvKernel<T> {
    pub fn zeros(c_out: usize, c_in: usize, k: usize) -> Self {
        ConvKernel {
            weight: Array4::zeros((c_out, c_in, k, k)),
            bias: Array1::zeros(c_out),
        }
    }

    pub fn kernel_size(&self) -> usize {
        self.weight.dim().2
    }

    pub fn c_out(&self) -> usize {
        self.weight.dim().0
    }

    pub fn c_in(&self) -> usize {
        self.weight.dim().1
    }
}

/// Convolve with zero padding so the output spatial size equals the input.
pub fn conv2d_same<T: Scalar>(input: &Array3<T>, kernel: &ConvKernel<T>) -> Array3<T> {
    let (h, w, c_in) = input.dim();
    let (c_out, kc_in, k, _) = kernel.weight.dim();
    debug_assert_eq!(c_in, kc_in);
    let pad = (k / 2) as isize;

    let mut out = Array3::zeros((h, w, c_out));
    for oy in 0..h {
        for ox in 0..w {
            for oc in 0..c_out {
                let mut acc = kernel.bias[oc];
                for ky in 0..k {
                    let iy = oy as isize + ky as isize - pad;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = ox as isize + kx as isize - pad;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        for ci in 0..c_in {
                            acc += kernel.weight[[oc, ci, ky, kx]]
                                * input[[iy as usize, ix as usize, ci]];
                        }
                    }
                }
                out[[oy, ox, oc]] = acc;
            }
        }
    }
    out
}

/// Adjoint of [`conv2d_same`]: gradients of the input, weights, and bias
/// given the gradient of the output.
pub fn conv2d_same_backward<T: Scalar>(
    input: &Array3<T>,
    kernel: &ConvKernel<T>,
    grad_out: &Array3<T>,
) -> (Array3<T>, ConvKernel<T>) {
    let (h, w, c_in) = input.dim();
    let (c_out, _, k, _) = kernel.weight.dim();
    let pad = (k / 2) as isize;

    let mut grad_input = Array3::zeros((h, w, c_in));
    let mut grad_kernel = ConvKernel::zeros(c_out, c_in, k);

    for oy in 0..h {
        for ox in 0..w {
            for oc in 0..c_out {
                let g = grad_out[[oy, ox, oc]];
                grad_kernel.bias[oc] += g;
                for ky in 0..k {
                    let iy = oy as isize + ky as isize - pad;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = ox as isize + kx as isize - pad;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        for ci in 0..c_in {
                            let x = input[[iy as usize, ix as usize, ci]];
                            grad_kernel.weight[[oc, ci, ky, kx]] += g * x;
                            grad_input[[iy as usize, ix as usize, ci]] +=
                                g * kernel.weight[[oc, ci, ky, kx]];
                        }
                    }
                }
            }
        }
    }
    (grad_input, grad_kernel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use rand::Rng;

    /// Bounds-checked reference written independently of the padded-loop
    /// implementation above: iterates input-relative offsets.
    fn conv_reference(input: &Array3<f64>, kernel: &ConvKernel<f64>) -> Array3<f64> {
        let (h, w, c_in) = input.dim();
        let (c_out, _, k, _) = kernel.weight.dim();
        let half = (k as i64 - 1) / 2;
        let mut out = Array3::zeros((h, w, c_out));
        for oc in 0..c_out {
            for y in 0..h as i64 {
                for x in 0..w as i64 {
                    let mut acc = kernel.bias[oc];
                    for dy in -half..=half {
                        for dx in -half..=half {
                            let (sy, sx) = (y + dy, x + dx);
                            if sy < 0 || sy >= h as i64 || sx < 0 || sx >= w as i64 {
                                continue;
                            }
                            for ci in 0..c_in {
                                acc += kernel.weight
                                    [[oc, ci, (dy + half) as usize, (dx + half) as usize]]
                                    * input[[sy as usize, sx as usize, ci]];
                            }
                        }
                    }
                    out[[y as usize, x as usize, oc]] = acc;
                }
            }
        }
        out
    }

    fn random_instance(
        k: usize,
        seed: u64,
    ) -> (Array3<f64>, ConvKernel<f64>) {
        let mut rng = rng_from(seed);
        let mut input = Array3::zeros((6, 6, 2));
        for v in input.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let mut kernel = ConvKernel::zeros(3, 2, k);
        for v in kernel.weight.iter_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
        for v in kernel.bias.iter_mut() {
            *v = rng.gen_range(-0.2..0.2);
        }
        (input, kernel)
    }

    #[test]
    fn matches_naive_reference_on_random_instances() {
        for k in [1usize, 3, 5] {
            for trial in 0..20 {
                let (input, kernel) = random_instance(k, 1000 * k as u64 + trial);
                let fast = conv2d_same(&input, &kernel);
                let slow = conv_reference(&input, &kernel);
                for (a, b) in fast.iter().zip(slow.iter()) {
                    assert!((a - b).abs() < 1e-10, "k={k} trial={trial}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let (input, kernel) = random_instance(3, 42);
        let grad_out = Array3::from_elem((6, 6, 3), 1.0);
        let (grad_input, grad_kernel) = conv2d_same_backward(&input, &kernel, &grad_out);

        let h = 1e-6;
        let loss = |input: &Array3<f64>, kernel: &ConvKernel<f64>| -> f64 {
            conv2d_same(input, kernel).iter().sum()
        };

        let mut probe = input.clone();
        probe[[2, 3, 1]] += h;
        let up = loss(&probe, &kernel);
        probe[[2, 3, 1]] -= 2.0 * h;
        let down = loss(&probe, &kernel);
        let fd = (up - down) / (2.0 * h);
        assert!((grad_input[[2, 3, 1]] - fd).abs() < 1e-6);

        let mut probe_kernel = kernel.clone();
        probe_kernel.weight[[1, 0, 2, 1]] += h;
        let up = loss(&input, &probe_kernel);
        probe_kernel.weight[[1, 0, 2, 1]] -= 2.0 * h;
        let down = loss(&input, &probe_kernel);
        let fd = (up - down) / (2.0 * h);
        assert!((grad_kernel.weight[[1, 0, 2, 1]] - fd).abs() < 1e-6);

        assert_eq!(grad_kernel.bias[0], 36.0);
    }
}
