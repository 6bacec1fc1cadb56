use crate::scalar::Scalar;

use super::plan::KERNEL;

/// Index map of a kernel-4 convolution from a `big`-cube to a `small`-cube:
/// small cell `o` reads big cell `o * stride - padding + k` per axis.
/// The same map, used adjointly, is a transposed convolution from small to big.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Geometry {
    pub big: usize,
    pub small: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Geometry {
    /// Output edge of a convolution over `input` cells.
    pub fn conv_out(input: usize, stride: usize, padding: usize) -> usize {
        (input + 2 * padding - KERNEL) / stride + 1
    }

    /// Output edge of a transposed convolution over `input` cells.
    pub fn transposed_out(input: usize, stride: usize, padding: usize) -> usize {
        (input - 1) * stride + KERNEL - 2 * padding
    }

    pub fn small_cells(&self) -> usize {
        self.small.pow(3)
    }

    pub fn big_cells(&self) -> usize {
        self.big.pow(3)
    }

    /// For each kernel tap, the small-axis range whose big index is in bounds,
    /// and the (possibly negative) big index at the start of that range.
    fn axis(&self) -> [(usize, usize, isize); KERNEL] {
        let mut out = [(0, 0, 0); KERNEL];
        for (k, slot) in out.iter_mut().enumerate() {
            let big_at = |o: usize| (o * self.stride + k) as isize - self.padding as isize;
            let lo = (0..self.small)
                .find(|&o| big_at(o) >= 0)
                .unwrap_or(self.small);
            let hi = (0..self.small)
                .rev()
                .find(|&o| big_at(o) < self.big as isize)
                .map_or(0, |o| o + 1);
            *slot = (lo, hi.max(lo), big_at(lo));
        }
        out
    }
}

/// Gathers `big` (`channels × big³`) into `col`
/// (`(channels·64) × small³`), zero-filling out-of-bounds taps.
pub fn im2col<T: Scalar>(geo: &Geometry, channels: usize, big: &[T], col: &mut [T]) {
    let (b, s, st) = (geo.big, geo.small, geo.stride);
    let sc = geo.small_cells();
    debug_assert_eq!(big.len(), channels * geo.big_cells());
    debug_assert_eq!(col.len(), channels * KERNEL.pow(3) * sc);
    let axis = geo.axis();
    col.fill(T::zero());
    for c in 0..channels {
        let src = &big[c * b * b * b..(c + 1) * b * b * b];
        for kz in 0..KERNEL {
            let (z0, z1, bz0) = axis[kz];
            for ky in 0..KERNEL {
                let (y0, y1, by0) = axis[ky];
                for (kx, &(x0, x1, bx0)) in axis.iter().enumerate() {
                    let row = ((c * KERNEL + kz) * KERNEL + ky) * KERNEL + kx;
                    let dst = &mut col[row * sc..(row + 1) * sc];
                    for oz in z0..z1 {
                        let iz = (bz0 + ((oz - z0) * st) as isize) as usize;
                        for oy in y0..y1 {
                            let iy = (by0 + ((oy - y0) * st) as isize) as usize;
                            let src_row = &src[(iz * b + iy) * b..(iz * b + iy + 1) * b];
                            let dst_row = &mut dst[(oz * s + oy) * s..(oz * s + oy + 1) * s];
                            let mut ix = bx0 as usize;
                            for d in &mut dst_row[x0..x1] {
                                *d = src_row[ix];
                                ix += st;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters `col` back, accumulating into `big`.
pub fn col2im<T: Scalar>(geo: &Geometry, channels: usize, col: &[T], big: &mut [T]) {
    let (b, s, st) = (geo.big, geo.small, geo.stride);
    let sc = geo.small_cells();
    debug_assert_eq!(big.len(), channels * geo.big_cells());
    debug_assert_eq!(col.len(), channels * KERNEL.pow(3) * sc);
    let axis = geo.axis();
    for c in 0..channels {
        let dst = &mut big[c * b * b * b..(c + 1) * b * b * b];
        for kz in 0..KERNEL {
            let (z0, z1, bz0) = axis[kz];
            for ky in 0..KERNEL {
                let (y0, y1, by0) = axis[ky];
                for (kx, &(x0, x1, bx0)) in axis.iter().enumerate() {
                    let row = ((c * KERNEL + kz) * KERNEL + ky) * KERNEL + kx;
                    let src = &col[row * sc..(row + 1) * sc];
                    for oz in z0..z1 {
                        let iz = (bz0 + ((oz - z0) * st) as isize) as usize;
                        for oy in y0..y1 {
                            let iy = (by0 + ((oy - y0) * st) as isize) as usize;
                            let dst_row = &mut dst[(iz * b + iy) * b..(iz * b + iy + 1) * b];
                            let src_row = &src[(oz * s + oy) * s..(oz * s + oy + 1) * s];
                            let mut ix = bx0 as usize;
                            for v in &src_row[x0..x1] {
                                dst_row[ix] = dst_row[ix] + *v;
                                ix += st;
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct 7-deep loop convolution.
    fn naive_conv(geo: &Geometry, cin: usize, cout: usize, x: &[f64], w: &[f64]) -> Vec<f64> {
        let (b, s) = (geo.big as isize, geo.small);
        let mut out = vec![0.0; cout * s * s * s];
        for co in 0..cout {
            for oz in 0..s {
                for oy in 0..s {
                    for ox in 0..s {
                        let mut acc = 0.0;
                        for ci in 0..cin {
                            for kz in 0..4 {
                                for ky in 0..4 {
                                    for kx in 0..4 {
                                        let at = |o: usize, k: usize| {
                                            (o * geo.stride + k) as isize - geo.padding as isize
                                        };
                                        let (iz, iy, ix) = (at(oz, kz), at(oy, ky), at(ox, kx));
                                        if [iz, iy, ix].iter().any(|v| *v < 0 || *v >= b) {
                                            continue;
                                        }
                                        let (iz, iy, ix) = (iz as usize, iy as usize, ix as usize);
                                        let bb = geo.big;
                                        acc += x[((ci * bb + iz) * bb + iy) * bb + ix]
                                            * w[(((co * cin + ci) * 4 + kz) * 4 + ky) * 4 + kx];
                                    }
                                }
                            }
                        }
                        out[((co * s + oz) * s + oy) * s + ox] = acc;
                    }
                }
            }
        }
        out
    }

    fn pseudo(n: usize, seed: u64) -> Vec<f64> {
        let mut state = seed;
        (0..n)
            .map(|_| {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                ((state >> 33) as f64 / (1u64 << 31) as f64) - 0.5
            })
            .collect()
    }

    #[test]
    fn output_size_formulas() {
        assert_eq!(Geometry::transposed_out(1, 1, 0), 4);
        assert_eq!(Geometry::transposed_out(4, 2, 1), 8);
        assert_eq!(Geometry::transposed_out(16, 2, 1), 32);
        assert_eq!(Geometry::conv_out(32, 2, 1), 16);
        assert_eq!(Geometry::conv_out(4, 1, 0), 1);
    }

    #[test]
    fn im2col_gemm_matches_naive_conv() {
        for geo in [
            Geometry {
                big: 8,
                small: 4,
                stride: 2,
                padding: 1,
            },
            Geometry {
                big: 4,
                small: 1,
                stride: 1,
                padding: 0,
            },
            Geometry {
                big: 5,
                small: 2,
                stride: 2,
                padding: 1,
            },
        ] {
            let (cin, cout) = (3, 2);
            let x = pseudo(cin * geo.big_cells(), 1);
            let w = pseudo(cout * cin * 64, 2);
            let mut col = vec![0.0; cin * 64 * geo.small_cells()];
            im2col(&geo, cin, &x, &mut col);
            let mut out = vec![0.0; cout * geo.small_cells()];
            let sc = geo.small_cells();
            f64::gemm(
                cout,
                cin * 64,
                sc,
                1.0,
                &w,
                (cin * 64) as isize,
                1,
                &col,
                sc as isize,
                1,
                0.0,
                &mut out,
                sc as isize,
                1,
            );
            let expect = naive_conv(&geo, cin, cout, &x, &w);
            for (a, b) in out.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12, "{geo:?}");
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let geo = Geometry {
            big: 8,
            small: 4,
            stride: 2,
            padding: 1,
        };
        let c = 2;
        let x = pseudo(c * geo.big_cells(), 3);
        let y = pseudo(c * 64 * geo.small_cells(), 4);
        let mut col = vec![0.0; y.len()];
        im2col(&geo, c, &x, &mut col);
        let lhs: f64 = col.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        col2im(&geo, c, &y, &mut back);
        let rhs: f64 = back.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
