use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sntk_core::normal_forms::{
    closed_form_flip_norm, landscape_sweep, linspace, NormalFormKind, ScalarNormalForm, UniformSampler,
};
use NormalFormKind::*;

const KINDS: [NormalFormKind; 4] = [StabilityFlip, Pitchfork, SaddleNode, Transcritical];

#[test]
fn sensitivities_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for _ in 0..100 {
        let kind = KINDS[rng.gen_range(0..4)];
        let g: f64 = rng.gen_range(0.0..1.6);
        let h0: f64 = rng.gen_range(-0.5..0.5);
        let len = rng.gen_range(1..=31);
        let eps = 1e-6;
        let Ok(traj) = ScalarNormalForm::new(kind, g).simulate(h0, len) else { continue };
        let (Ok(p), Ok(m)) = (
            ScalarNormalForm::new(kind, g + eps).simulate(h0, len),
            ScalarNormalForm::new(kind, g - eps).simulate(h0, len),
        ) else {
            continue;
        };
        for t in 0..len {
            if p.states[t].abs() > 10.0 || m.states[t].abs() > 10.0 {
                break;
            }
            let fd = (p.states[t] - m.states[t]) / (2.0 * eps);
            let s = traj.sensitivities[t];
            assert!((s - fd).abs() <= 1e-5 * fd.abs().max(1e-3), "{kind:?} g={g} h0={h0} t={t}: {s} vs {fd}");
            checked += 1;
        }
    }
    assert!(checked > 500);
}

#[test]
fn flip_norm_equals_closed_form() {
    for g in [0.0f64, 0.5, 0.9, 1.0, 1.1, 1.3] {
        for t in [1, 5, 30] {
            let a = ScalarNormalForm::new(StabilityFlip, g).sntk_norm(&[1.0], t).unwrap();
            let b = closed_form_flip_norm(g, 1.0, t);
            assert!((a - b).abs() <= 1e-12 * b.abs(), "g={g} T={t}: {a} vs {b}");
        }
    }
    assert_eq!(closed_form_flip_norm(1.0, 1.0, 30), 9455.0);
    assert_eq!(ScalarNormalForm::new(StabilityFlip, 1.0).sntk_norm(&[1.0], 30).unwrap(), 9455.0);
}

#[test]
fn pitchfork_norm_is_even_in_h0() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let g: f64 = rng.gen_range(0.5..1.5);
        let h0: f64 = rng.gen_range(-0.3..0.3);
        let f = ScalarNormalForm::new(Pitchfork, g);
        assert_eq!(f.sntk_norm(&[h0], 30).unwrap(), f.sntk_norm(&[-h0], 30).unwrap());
    }
}

#[test]
fn stable_flip_sum_saturates() {
    let f = ScalarNormalForm::new(StabilityFlip, 0.9);
    let ratio = f.sntk_norm(&[1.0], 300).unwrap() / f.sntk_norm(&[1.0], 150).unwrap();
    assert!((1.0..=1.05).contains(&ratio), "{ratio}");
}

#[test]
fn pitchfork_settles_on_branch() {
    let traj = ScalarNormalForm::new(Pitchfork, 1.5).simulate(0.1, 100).unwrap();
    assert!((traj.states[99] - 0.5f64.sqrt()).abs() < 1e-3);
}

fn sweep(kind: NormalFormKind) -> Vec<(f64, f64)> {
    let sampler = UniformSampler { low: -0.05, high: 0.05, count: 64, seed: 0 };
    landscape_sweep(kind, &linspace(0.5, 1.5, 101), &sampler, 30)
        .unwrap()
        .into_iter()
        .map(|p| (p.g, p.mean_norm))
        .collect()
}

#[test]
fn flip_sweep_grows_past_criticality() {
    let pts = sweep(StabilityFlip);
    let above: Vec<f64> = pts.iter().filter(|(g, _)| *g >= 1.0 - 1e-12).map(|p| p.1).collect();
    assert!(above.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn pitchfork_sweep_peaks_past_criticality() {
    let pts = sweep(Pitchfork);
    let (gmax, peak) = pts.iter().copied().fold((0.0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
    assert!(gmax > 1.0);
    assert!(pts.last().unwrap().1 < peak);
    let at1 = pts.iter().find(|(g, _)| (*g - 1.0).abs() < 1e-9).unwrap().1;
    assert!(pts[0].1 <= 0.01 * at1);
}

#[test]
fn degenerate_sampler_gives_zero_norm() {
    let sampler = UniformSampler { low: 0.0, high: 0.0, count: 4, seed: 0 };
    for kind in [StabilityFlip, Pitchfork, Transcritical] {
        for p in landscape_sweep(kind, &linspace(0.5, 1.5, 11), &sampler, 30).unwrap() {
            assert_eq!(p.mean_norm, 0.0);
        }
    }
}

#[test]
fn sweep_is_deterministic() {
    assert_eq!(sweep(Pitchfork), sweep(Pitchfork));
}
