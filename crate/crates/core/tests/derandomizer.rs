use netdecomp::derandomizer::{DerandParams, FailureModel, DEFAULT_BUDGET};
use netdecomp::graph::bfs_bounded;
use netdecomp::lll::cps::simulate;
use netdecomp::lll::sinkless_instance;
use netdecomp::workbench::generators::random_regular;
use netdecomp::workbench::instances::{make_instance, InstanceKind};
use netdecomp::Graph;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tapes(model: &FailureModel, rng: &mut impl Rng) -> Vec<Vec<u64>> {
    (0..model.inst.num_events())
        .map(|v| (0..model.tape_len(v)).map(|p| rng.gen_range(0..model.range_at(v, p)) as u64).collect())
        .collect()
}

#[test]
fn randomness_outside_the_ball_is_irrelevant() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cycle: Vec<(usize, usize)> = (0..12).map(|i| (i, (i + 1) % 12)).collect();
    let graphs = [
        random_regular(20, 3, 1).unwrap(),
        random_regular(16, 4, 2).unwrap(),
        Graph::new(12, &cycle).unwrap(),
    ];
    for g in &graphs {
        let inst = sinkless_instance(g);
        for iterations in [1u64, 2, 3] {
            let model = FailureModel::new(&inst, iterations);
            let radius = (3 * iterations + 1) as u32;
            for _ in 0..10 {
                let tapes = random_tapes(&model, &mut rng);
                let (_, base) = simulate(&inst, iterations, &tapes);
                for v in 0..g.n() {
                    let ball = bfs_bounded(&inst.h, &[v], radius);
                    let mut other = random_tapes(&model, &mut rng);
                    for u in 0..g.n() {
                        if ball[u] != u32::MAX {
                            other[u] = tapes[u].clone();
                        }
                    }
                    let (_, viol) = simulate(&inst, iterations, &other);
                    assert_eq!(base.contains(&v), viol.contains(&v), "node {v}, {iterations} iterations");
                }
            }
        }
    }
}

#[test]
fn expectation_matches_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let inst = make_instance(&InstanceKind::RiggedCycle { n: 8, seed: 3 }, &Graph::new(1, &[]).unwrap()).unwrap();
    let model = FailureModel::new(&inst, 2);
    let scope: Vec<usize> = (0..8).collect();
    for checkpoint in 0..10 {
        let mut fixed = model.empty_fixing();
        for t in fixed.iter_mut() {
            for slot in t.iter_mut() {
                if rng.gen_bool(0.3) {
                    *slot = Some(rng.gen_range(0..4));
                }
            }
        }
        let exact = model.failure_expectation(&fixed, &scope, DEFAULT_BUDGET).unwrap().to_f64().unwrap();
        let samples = 4000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..samples {
            let mut tapes = random_tapes(&model, &mut rng);
            for (v, t) in fixed.iter().enumerate() {
                for (p, f) in t.iter().enumerate() {
                    if let Some(x) = f {
                        tapes[v][p] = *x as u64;
                    }
                }
            }
            let x = simulate(&inst, 2, &tapes).1.len() as f64;
            sum += x;
            sq += x * x;
        }
        let mean = sum / samples as f64;
        let var = (sq / samples as f64 - mean * mean).max(1.0 / samples as f64);
        let sigma = (var / samples as f64).sqrt();
        assert!((mean - exact).abs() <= 4.0 * sigma, "checkpoint {checkpoint}: {mean} vs {exact}");
    }
}

#[test]
fn parameters_scale_with_the_component() {
    let p = DerandParams::for_size(1000, 4);
    assert_eq!(p.t, 40);
    assert_eq!(p.resized(2).t, 4);
    assert_eq!(p.resized(1).iterations(), 0);
}
