//! Baseline symmetries and scoring invariants.

mod common;

use std::sync::OnceLock;

use common::{pose_pair, world};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sightline_core::baselines::{baseline_allocentric, baseline_egocentric};
use sightline_core::bench::{
    ablation_deltas, prepare_items, score, Builtin, BuiltinMethod, Corpus, CorpusConfig, EvalItem, EvalOptions,
};
use sightline_core::engine::EngineConfig;
use sightline_core::geometry::{AgentPose, Scheme, Vec2};
use sightline_core::scene::GenConstraints;

fn shifted(p: &AgentPose, s: Vec2) -> AgentPose {
    AgentPose {
        position: p.position + s,
        ..*p
    }
}

fn items() -> &'static [EvalItem] {
    static ITEMS: OnceLock<Vec<EvalItem>> = OnceLock::new();
    ITEMS.get_or_init(|| {
        let corpus = Corpus::generate(CorpusConfig {
            seed: 21,
            per_condition: 12,
            scheme: Scheme::Quadrant4,
            constraints: GenConstraints::default(),
        })
        .unwrap();
        let opts = EvalOptions {
            noise: sightline_core::evidence::NoiseModel::with_flip_rate(0.4, 3),
            audio: false,
            ..EvalOptions::default()
        };
        prepare_items(&corpus.items, &opts).unwrap()
    })
}

fn method(kind: Builtin) -> BuiltinMethod {
    BuiltinMethod {
        kind,
        engine: EngineConfig::default(),
        seed: 9,
    }
}

proptest! {
    #[test]
    fn allocentric_ignores_translation((a, b) in pose_pair(), sx in -50.0f64..50.0, sy in -50.0f64..50.0) {
        let s = Vec2::new(sx, sy);
        let w = world(a, b, vec![]);
        let t = world(shifted(&a, s), shifted(&b, s), vec![]);
        prop_assert_eq!(
            baseline_allocentric(&w, Scheme::Quadrant4).belief_direction,
            baseline_allocentric(&t, Scheme::Quadrant4).belief_direction
        );
    }

    #[test]
    fn baselines_are_deterministic((a, b) in pose_pair(), seed in any::<u64>()) {
        let w = world(a, b, vec![]);
        prop_assert_eq!(baseline_allocentric(&w, Scheme::Octant8), baseline_allocentric(&w, Scheme::Octant8));
        prop_assert_eq!(baseline_egocentric(&[], 1.0, Scheme::Octant8, seed), baseline_egocentric(&[], 1.0, Scheme::Octant8, seed));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn scoring_ignores_item_order(perm_seed in any::<u64>()) {
        let mut shuffled = items().to_vec();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
        for kind in [Builtin::PipelineNoAudio, Builtin::BaselineEgo, Builtin::Random] {
            prop_assert_eq!(score(&method(kind), items()), score(&method(kind), &shuffled));
        }
    }
}

#[test]
fn strata_reassemble_into_overall() {
    for kind in Builtin::ALL {
        let r = score(&method(kind), items());
        let (c, t) = r
            .conditions
            .values()
            .fold((0, 0), |(c, t), x| (c + x.correct, t + x.total));
        assert_eq!((c, t), (r.overall.correct, r.overall.total));
        let (c, t) = r
            .difficulty
            .values()
            .fold((0, 0), |(c, t), x| (c + x.correct, t + x.total));
        assert_eq!((c, t), (r.overall.correct, r.overall.total));
        assert_eq!(t, items().len());
        for cell in r.conditions.values().chain(r.difficulty.values()) {
            assert!(cell.accuracy.is_some_and(|a| (0.0..=1.0).contains(&a)));
        }
        let weighted: f64 = r
            .conditions
            .values()
            .map(|x| x.accuracy.unwrap() * x.total as f64)
            .sum::<f64>()
            / t as f64;
        assert!((weighted - r.overall.accuracy.unwrap()).abs() < 1e-12);
    }
}

#[test]
fn ablation_swaps_sign() {
    let a = score(&method(Builtin::BaselineEgo), items());
    let b = score(&method(Builtin::PipelineNoAudio), items());
    for ((k, x), (_, y)) in ablation_deltas(&a, &b).iter().zip(ablation_deltas(&b, &a).iter()) {
        assert_eq!(*x, y.map(|v| -v), "{k}");
    }
}
