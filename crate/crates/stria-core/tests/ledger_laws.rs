//! Ledger laws: simulated operation counts equal the closed-form
//! complexity formulas across block shapes and whole plans.

use rand::rngs::StdRng;
use rand::SeedableRng;
use stria_core::block::{BlockShape, StriaBlock};
use stria_core::cost::{striablock_layers, striablock_rot, CalibrationTable};
use stria_core::engine::{OpLedger, SimContext};
use stria_core::gen;
use stria_core::planner::{self, plan_network, ScheduleParams, StagePlan};

fn simulate_shape(d: usize, e: usize, c_n: usize, seed: u64) -> OpLedger {
    let shape = BlockShape::new(d, e, c_n).unwrap();
    let block: StriaBlock<i64> = gen::random_block(&mut StdRng::seed_from_u64(seed), shape);
    let mut rng = StdRng::seed_from_u64(seed + 1);
    let input = gen::random_tensor::<i64>(&mut rng, d, 4, 4, 2);
    let mut ctx = SimContext::<i64>::new(16 * c_n).unwrap();
    let (out, ledger) = block.eval_encrypted(&input, &mut ctx).unwrap();
    assert_eq!(out, block.eval_plain(&input, false).unwrap());
    ledger
}

/// Block ledgers equal the layer-sum closed form. Small base dimensions
/// cover the full expansion/capacity grid; the large-dimension corners are
/// spot-checked (the engine's work scales with e*D but its counting paths
/// do not change).
#[test]
fn block_ledgers_match_closed_form_over_the_grid() {
    let mut checked = 0;
    for d in [8usize, 16, 32] {
        for e in 1..=8usize {
            for c_n in [1usize, 2, 4, 8] {
                if e * d < c_n || (e * d) % c_n != 0 {
                    continue;
                }
                let want = striablock_rot(d, e, c_n).unwrap();
                let ledger = simulate_shape(d, e, c_n, 500 + checked);
                assert_eq!(
                    (ledger.in_rot, ledger.ex_rot),
                    (want.in_rot, want.ex_rot),
                    "d={d} e={e} c_n={c_n}"
                );
                checked += 1;
            }
        }
    }
    for (d, e, c_n) in [(64usize, 8usize, 8usize), (128, 2, 8), (256, 1, 4)] {
        let want = striablock_rot(d, e, c_n).unwrap();
        let ledger = simulate_shape(d, e, c_n, 900);
        assert_eq!((ledger.in_rot, ledger.ex_rot), (want.in_rot, want.ex_rot));
        checked += 1;
    }
    assert!(checked >= 90, "grid should cover at least 90 shapes, got {checked}");
}

/// The block closed form equals the sum of the three
/// constituent layers' tap-exact counts.
#[test]
fn block_closed_form_is_the_layer_sum() {
    for d in [8usize, 16, 32, 64, 128, 256] {
        for e in 1..=8usize {
            for c_n in [1usize, 2, 4, 8, 32, 128] {
                if e * d < c_n {
                    continue;
                }
                let block = striablock_rot(d, e, c_n).unwrap();
                let mut in_rot = 0;
                let mut ex_rot = 0;
                for layer in striablock_layers(d, e, 4) {
                    let counts = stria_core::cost::rot_counts(&layer, c_n);
                    in_rot += counts.ledger_in();
                    ex_rot += counts.ledger_ex();
                }
                assert_eq!((block.in_rot, block.ex_rot), (in_rot, ex_rot));
            }
        }
    }
}

/// Formula/ledger equality extended to the masked and cross patterns: the
/// tap-exact closed forms equal the simulated ledgers for every pattern
/// combination over the sweep dims.
#[test]
fn pattern_sweep_formulas_match_ledgers() {
    use stria_core::cost::{add_count, mult_count, rot_counts, LayerMatrixPattern, LayerSpec};
    use stria_core::kernel::KernelPattern;
    use stria_core::mimo::{mimo_conv, KernelMatrix};
    use stria_core::oracle::mimo_conv_plain;
    use stria_core::packing::{pack, unpack};

    let mut rng = StdRng::seed_from_u64(777);
    for c in [4usize, 8, 16] {
        for c_n in [2usize, 4, 8] {
            for kernel_pattern in [KernelPattern::Regular, KernelPattern::Cross] {
                for matrix_pattern in [LayerMatrixPattern::Dense, LayerMatrixPattern::ExRotFree] {
                    let k = 3;
                    let layer = LayerSpec::conv(c, c, k, 4, 4)
                        .with_kernel(kernel_pattern)
                        .with_matrix(matrix_pattern);
                    let counts = rot_counts(&layer, c_n);
                    let matrix: KernelMatrix<i64> = match matrix_pattern {
                        LayerMatrixPattern::Dense => KernelMatrix::dense_from_fn(c, c, |_, _| {
                            gen::random_kernel(&mut rng, k, k, kernel_pattern, 4)
                        })
                        .unwrap(),
                        LayerMatrixPattern::ExRotFree => {
                            KernelMatrix::exrot_free_from_fn(c, c, c_n, |_, _| {
                                gen::random_kernel(&mut rng, k, k, kernel_pattern, 4)
                            })
                            .unwrap()
                        }
                    };
                    let input = gen::random_tensor::<i64>(&mut rng, c, 4, 4, 3);
                    let plain = mimo_conv_plain(&input, &matrix).unwrap();
                    let mut ctx = SimContext::<i64>::new(16 * c_n).unwrap();
                    let (ciphers, layout) = pack(&input, &ctx).unwrap();
                    let before = ctx.ledger_snapshot();
                    let outs =
                        mimo_conv(&mut ctx, &ciphers, &matrix, &layout, counts.scheme).unwrap();
                    let ledger = ctx.ledger_since(&before);
                    let label = format!("c={c} c_n={c_n} {kernel_pattern:?} {matrix_pattern:?}");
                    assert_eq!(ledger.in_rot, counts.ledger_in(), "{label} in-Rot");
                    assert_eq!(ledger.ex_rot, counts.ledger_ex(), "{label} ex-Rot");
                    assert_eq!(ledger.mult, mult_count(&layer, c_n), "{label} mult");
                    assert_eq!(ledger.add, add_count(&layer, c_n), "{label} add");
                    let mut out_layout = layout.clone();
                    out_layout.channels = c;
                    out_layout.channel_order = (0..c).collect();
                    assert_eq!(unpack(&outs, &out_layout).unwrap(), plain, "{label} value");
                    // the literal table variant differs only for cross kernels,
                    // by one rotation per input ciphertext (the center tap)
                    match kernel_pattern {
                        KernelPattern::Regular => assert_eq!(counts.in_rot_table, counts.in_rot),
                        KernelPattern::Cross => assert_eq!(
                            counts.in_rot_table,
                            counts.in_rot + c.div_ceil(c_n) as u64
                        ),
                    }
                }
            }
        }
    }
}

/// Simulating a planned network end-to-end gives exactly the report's
/// block operation counts.
#[test]
fn plan_and_ledger_agree_on_a_desk_scale_network() {
    let stages = [
        StagePlan { hw: 8, d: 8, blocks: 2, e: Some(2) },
        StagePlan { hw: 4, d: 16, blocks: 2, e: Some(2) },
    ];
    let slots = 256; // capacities 4 and 16 at the two spatial sizes
    let network = plan_network(8, slots, &stages, &ScheduleParams::default(), None, None).unwrap();
    let report = planner::report(&network, &CalibrationTable::paper_defaults()).unwrap();

    let mut rng = StdRng::seed_from_u64(321);
    let mut total = OpLedger::default();
    for stage in &network.stages {
        let shape = BlockShape::new(stage.d, stage.e, stage.c_n).unwrap();
        let mut input = gen::random_tensor::<i64>(&mut rng, stage.d, stage.hw, stage.hw, 2);
        for _ in 0..stage.blocks {
            let block: StriaBlock<i64> = gen::random_block(&mut rng, shape);
            let mut ctx = SimContext::<i64>::new(slots).unwrap();
            let (out, ledger) = block.eval_encrypted(&input, &mut ctx).unwrap();
            total += ledger;
            input = out;
        }
    }
    assert_eq!(total.in_rot, report.total.in_rot);
    assert_eq!(total.ex_rot, report.total.ex_rot);
    assert_eq!(total.mult, report.total.mult);
    assert_eq!(total.add, report.total.add);
}
