//! Front-to-back alpha compositing and its adjoint.

/// Composites samples ordered front to back. `color` holds three channels
/// per sample. Returns the pixel color and the final transmittance
/// `prod_i (1 - alpha_i)`.
pub fn forward(alpha: &[f64], color: &[f64], background: [f64; 3]) -> ([f64; 3], f64) {
    debug_assert_eq!(color.len(), 3 * alpha.len());
    let mut out = [0.0; 3];
    let mut transmittance = 1.0;
    for (a, c) in alpha.iter().zip(color.chunks_exact(3)) {
        let w = a * transmittance;
        out[0] += w * c[0];
        out[1] += w * c[1];
        out[2] += w * c[2];
        transmittance *= 1.0 - a;
    }
    for ch in 0..3 {
        out[ch] += transmittance * background[ch];
    }
    (out, transmittance)
}

/// Accumulates the adjoints of [`forward`] into `d_alpha` and `d_color`
/// given the output adjoint `d_out`.
///
/// Uses the suffix color `S_k` (everything behind sample `k`, composited
/// over the background) so that `d out / d alpha_k = T_k (c_k - S_k)`
/// stays well defined when some `alpha_j = 1`.
pub fn backward(
    alpha: &[f64],
    color: &[f64],
    background: [f64; 3],
    d_out: [f64; 3],
    d_alpha: &mut [f64],
    d_color: &mut [f64],
) {
    let n = alpha.len();
    let mut trans = Vec::with_capacity(n);
    let mut t = 1.0;
    for a in alpha {
        trans.push(t);
        t *= 1.0 - a;
    }
    let mut behind = background;
    for k in (0..n).rev() {
        let a = alpha[k];
        let c = &color[3 * k..3 * k + 3];
        let tk = trans[k];
        let mut da = 0.0;
        for ch in 0..3 {
            da += d_out[ch] * (c[ch] - behind[ch]);
            d_color[3 * k + ch] += d_out[ch] * a * tk;
        }
        d_alpha[k] += tk * da;
        for ch in 0..3 {
            behind[ch] = c[ch] * a + (1.0 - a) * behind[ch];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_samples_gives_background() {
        let (rgb, t) = forward(&[], &[], [0.2, 0.4, 0.6]);
        assert_eq!(rgb, [0.2, 0.4, 0.6]);
        assert_eq!(t, 1.0);
    }

    #[test]
    fn opaque_sample_hides_everything_behind() {
        let (rgb, t) = forward(&[1.0, 0.7], &[0.1, 0.2, 0.3, 1.0, 1.0, 1.0], [1.0; 3]);
        assert_eq!(rgb, [0.1, 0.2, 0.3]);
        assert_eq!(t, 0.0);
    }

    #[test]
    fn half_red_over_opaque_blue() {
        let (rgb, _) = forward(&[0.5, 1.0], &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0], [1.0; 3]);
        assert_eq!(rgb, [0.5, 0.0, 0.5]);
    }

    #[test]
    fn transmittance_telescopes() {
        let alpha = [0.1, 0.35, 0.0, 0.9, 0.42];
        let color = [0.5; 15];
        let (_, t) = forward(&alpha, &color, [1.0; 3]);
        let prod: f64 = alpha.iter().map(|a| 1.0 - a).product();
        assert!((t - prod).abs() < 1e-12);
    }

    #[test]
    fn adjoint_matches_finite_differences_including_opaque_samples() {
        let alpha = vec![0.3, 1.0, 0.6, 0.2];
        let color: Vec<f64> = (0..12).map(|i| (i as f64 * 0.29).sin().abs()).collect();
        let bg = [0.9, 0.8, 0.7];
        let d_out = [0.4, -1.1, 0.6];
        let loss = |a: &[f64], c: &[f64]| {
            let (rgb, _) = forward(a, c, bg);
            rgb.iter().zip(d_out).map(|(x, w)| x * w).sum::<f64>()
        };
        let mut da = vec![0.0; 4];
        let mut dc = vec![0.0; 12];
        backward(&alpha, &color, bg, d_out, &mut da, &mut dc);
        let h = 1e-6;
        for k in 0..4 {
            let mut up = alpha.clone();
            up[k] += h;
            let mut dn = alpha.clone();
            dn[k] -= h;
            let fd = (loss(&up, &color) - loss(&dn, &color)) / (2.0 * h);
            assert!((fd - da[k]).abs() < 1e-8, "alpha {k}: {fd} vs {}", da[k]);
        }
        for k in 0..12 {
            let mut up = color.clone();
            up[k] += h;
            let mut dn = color.clone();
            dn[k] -= h;
            let fd = (loss(&alpha, &up) - loss(&alpha, &dn)) / (2.0 * h);
            assert!((fd - dc[k]).abs() < 1e-8);
        }
    }
}
