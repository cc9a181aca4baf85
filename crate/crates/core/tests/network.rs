mod common;

use common::{direct_forward, gaussian_tensor, gradient_check, random_network};
use proptest::prelude::*;
use vnlnet::network::{NetworkConfig, Tensor};

fn tiny(n: usize, channels: usize) -> NetworkConfig {
    NetworkConfig::tiny(n, channels, 2, 3, 4)
}

#[test]
fn forward_matches_direct_reimplementation() {
    for seed in 0..6u64 {
        let cfg = tiny(3, 1 + 2 * (seed as usize % 2));
        let net = random_network(cfg, seed);
        let x = gaussian_tensor(2, cfg.n_channels_in, 7, 9, 100 + seed, 10.0);
        for training in [false, true] {
            let got = if training { net.forward_train(&x).unwrap().output().clone() } else { net.forward(&x).unwrap() };
            let want = direct_forward(&net, &x, training);
            let scale = want.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in got.data.iter().zip(&want.data) {
                assert!((a - b).abs() <= 1e-5 * scale.max(1e-12), "{a} vs {b}");
            }
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..3u64 {
        let cfg = tiny(2, 1);
        let net = random_network(cfg, seed);
        let x = gaussian_tensor(2, 2, 5, 5, 10 + seed, 1.0);
        let t = gaussian_tensor(2, 1, 5, 5, 20 + seed, 1.0);
        let r = gradient_check(&net, &x, &t, 1e-3, 1e-8);
        assert!(r.checked > 0);
        assert!(r.max_rel_err < 1e-4, "{r:?}");
    }
}

#[test]
fn output_is_translation_equivariant_in_the_interior() {
    let cfg = NetworkConfig::tiny(2, 1, 1, 2, 3);
    let net = random_network(cfg, 4).cast::<f64>();
    let (h, w) = (12, 14);
    let x = gaussian_tensor(1, 2, h, w + 1, 9, 5.0);
    // crop columns 0..w and 1..w+1
    let crop = |off: usize| {
        let mut d = Vec::new();
        for c in 0..2 {
            for y in 0..h {
                d.extend_from_slice(&x.data[(c * h + y) * (w + 1) + off..][..w]);
            }
        }
        Tensor::from_vec(1, 2, h, w, d).unwrap()
    };
    let a = net.forward(&crop(0)).unwrap();
    let b = net.forward(&crop(1)).unwrap();
    // three 3×3 layers: a border of 3 columns is affected by padding
    let m = 3;
    for y in m..h - m {
        for xx in m + 1..w - m {
            let va = a.data[y * w + xx];
            let vb = b.data[y * w + xx - 1];
            assert!((va - vb).abs() < 1e-9, "({y},{xx}) {va} vs {vb}");
        }
    }
}

#[test]
fn inference_does_not_depend_on_worker_count() {
    let cfg = NetworkConfig::tiny(3, 3, 2, 2, 6);
    let net = vnlnet::network::Network::<f32>::init(cfg, 8).unwrap();
    let x = Tensor::<f32>::from_vec(3, 9, 20, 24, (0..3 * 9 * 20 * 24).map(|i| ((i * 31) % 255) as f32).collect()).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            let y = net.forward(&x).unwrap();
            let (_, g, _) = net.loss_and_gradients(&x, &Tensor::zeros(3, 3, 20, 24)).unwrap();
            (y, g)
        })
    };
    let (y1, g1) = run(1);
    for t in [2, 3, 5] {
        let (y, g) = run(t);
        assert_eq!(y.data, y1.data);
        assert_eq!(g, g1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn random_tiny_networks_pass_gradient_check(seed in 0u64..1_000_000, color in any::<bool>(), n in 1usize..4) {
        let c = if color { 3 } else { 1 };
        let cfg = tiny(n, c);
        let net = random_network(cfg, seed);
        let x = gaussian_tensor(2, cfg.n_channels_in, 4, 5, seed ^ 0xabc, 1.0);
        let t = gaussian_tensor(2, c, 4, 5, seed ^ 0xdef, 1.0);
        let r = gradient_check(&net, &x, &t, 1e-3, 1e-8);
        prop_assert!(r.max_rel_err < 1e-4, "{:?}", r);
    }
}
