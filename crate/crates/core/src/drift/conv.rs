//! Periodic 2D convolution on channel-major `[c][y][x]` buffers.
//!
//! Every output pixel accumulates its taps in the same order, so a circular
//! shift of the input shifts the output bit-for-bit.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvShape {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub height: usize,
    pub width: usize,
}

impl ConvShape {
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * self.kernel * self.kernel
    }

    fn offset(&self, d: usize) -> isize {
        d as isize - (self.kernel / 2) as isize
    }

    fn widx(&self, o: usize, c: usize, dy: usize, dx: usize) -> usize {
        ((o * self.cin + c) * self.kernel + dy) * self.kernel + dx
    }
}

/// `dst[y][x] = src[(y + oy) mod h][(x + ox) mod w]`.
fn shift_into(src: &[f64], h: usize, w: usize, oy: isize, ox: isize, dst: &mut [f64]) {
    let sx = ox.rem_euclid(w as isize) as usize;
    for y in 0..h {
        let sy = (y as isize + oy).rem_euclid(h as isize) as usize;
        let row = &src[sy * w..(sy + 1) * w];
        let out = &mut dst[y * w..(y + 1) * w];
        out[..w - sx].copy_from_slice(&row[sx..]);
        out[w - sx..].copy_from_slice(&row[..sx]);
    }
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `out[o] += Σ_{c,dy,dx} W[o,c,dy,dx] · in[c] shifted by (dy − r, dx − r)`.
pub(crate) fn conv_forward(s: &ConvShape, weight: &[f64], input: &[f64], out: &mut [f64]) {
    let p = s.pixels();
    let mut shifted = vec![0.0; p];
    for c in 0..s.cin {
        let src = &input[c * p..(c + 1) * p];
        for dy in 0..s.kernel {
            for dx in 0..s.kernel {
                shift_into(
                    src,
                    s.height,
                    s.width,
                    s.offset(dy),
                    s.offset(dx),
                    &mut shifted,
                );
                for o in 0..s.cout {
                    axpy(
                        weight[s.widx(o, c, dy, dx)],
                        &shifted,
                        &mut out[o * p..(o + 1) * p],
                    );
                }
            }
        }
    }
}

/// Accumulates `∂L/∂W` into `dweight` and, when given, `∂L/∂input` into `dinput`.
pub(crate) fn conv_backward(
    s: &ConvShape,
    weight: &[f64],
    input: &[f64],
    dout: &[f64],
    dweight: &mut [f64],
    mut dinput: Option<&mut [f64]>,
) {
    let p = s.pixels();
    let mut shifted = vec![0.0; p];
    let mut gathered = vec![0.0; p];
    let mut back = vec![0.0; p];
    for c in 0..s.cin {
        let src = &input[c * p..(c + 1) * p];
        for dy in 0..s.kernel {
            for dx in 0..s.kernel {
                let (oy, ox) = (s.offset(dy), s.offset(dx));
                shift_into(src, s.height, s.width, oy, ox, &mut shifted);
                gathered.iter_mut().for_each(|g| *g = 0.0);
                for o in 0..s.cout {
                    let d = &dout[o * p..(o + 1) * p];
                    let wi = s.widx(o, c, dy, dx);
                    dweight[wi] += dot(d, &shifted);
                    if dinput.is_some() {
                        axpy(weight[wi], d, &mut gathered);
                    }
                }
                if let Some(din) = dinput.as_deref_mut() {
                    shift_into(&gathered, s.height, s.width, -oy, -ox, &mut back);
                    axpy(1.0, &back, &mut din[c * p..(c + 1) * p]);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_copies_input() {
        let s = ConvShape {
            cin: 1,
            cout: 1,
            kernel: 3,
            height: 3,
            width: 4,
        };
        let mut w = vec![0.0; 9];
        w[4] = 1.0;
        let input: Vec<f64> = (0..12).map(f64::from).collect();
        let mut out = vec![0.0; 12];
        conv_forward(&s, &w, &input, &mut out);
        assert_eq!(out, input);
    }

    #[test]
    fn shift_kernel_wraps_periodically() {
        let s = ConvShape {
            cin: 1,
            cout: 1,
            kernel: 3,
            height: 1,
            width: 4,
        };
        // Tap at dx = 2 reads x + 1.
        let mut w = vec![0.0; 9];
        w[1 * 3 + 2] = 1.0;
        let mut out = vec![0.0; 4];
        conv_forward(&s, &w, &[1.0, 2.0, 3.0, 4.0], &mut out);
        assert_eq!(out, vec![2.0, 3.0, 4.0, 1.0]);
    }

    #[test]
    fn backward_is_the_adjoint_of_forward() {
        let s = ConvShape {
            cin: 2,
            cout: 3,
            kernel: 3,
            height: 4,
            width: 5,
        };
        let p = s.pixels();
        let w: Vec<f64> = (0..s.weight_len())
            .map(|i| ((i * 37 % 11) as f64 - 5.0) / 7.0)
            .collect();
        let x: Vec<f64> = (0..2 * p)
            .map(|i| ((i * 13 % 7) as f64 - 3.0) / 3.0)
            .collect();
        let g: Vec<f64> = (0..3 * p)
            .map(|i| ((i * 17 % 5) as f64 - 2.0) / 2.0)
            .collect();
        let mut y = vec![0.0; 3 * p];
        conv_forward(&s, &w, &x, &mut y);
        let mut dw = vec![0.0; s.weight_len()];
        let mut dx = vec![0.0; 2 * p];
        conv_backward(&s, &w, &x, &g, &mut dw, Some(&mut dx));
        // <g, Conv(x)> = <Convᵀ g, x> = <dW, W> (bilinear in W and x).
        let lhs = dot(&g, &y);
        assert!((lhs - dot(&dx, &x)).abs() < 1e-10);
        assert!((lhs - dot(&dw, &w)).abs() < 1e-10);
    }
}
