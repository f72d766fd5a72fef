mod common;

use alf_core::grid::{CellSet, GridPos, TargetShape};
use alf_core::lightfield::{full_field, intensity_at, local_field, DiscountType, LightParams, LightSources};
use alf_core::Exact;
use num_traits::{FromPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Contribution of one source, written out from the nine formulas directly.
fn term(code: u8, l: f64, beta: f64, g: GridPos, s: GridPos) -> f64 {
    let dr = (g.row as f64 - s.row as f64).abs();
    let dc = (g.col as f64 - s.col as f64).abs();
    let (d, d2) = match (code - 1) % 3 {
        0 => (dr + dc, (dr + dc) * (dr + dc)),
        1 => ((dr * dr + dc * dc).sqrt(), dr * dr + dc * dc),
        _ => (dr.max(dc), dr.max(dc) * dr.max(dc)),
    };
    match (code - 1) / 3 {
        0 => l - beta * d,
        1 => l / (1.0 + beta * d),
        _ => l / (1.0 + beta * d2),
    }
}

/// Double loop over the grid: every unoccupied target cell is blue, every
/// agent outside the shape is red.
fn brute(code: u8, l: f64, beta: f64, shape: &TargetShape, occ: &CellSet, g: GridPos) -> (f64, f64, f64, f64) {
    let dims = shape.dims();
    let (mut blue, mut red, mut blue_abs, mut red_abs) = (0.0, 0.0, 0.0, 0.0);
    for r in 1..=dims.height {
        for c in 1..=dims.width {
            let s = GridPos::new(r, c);
            let t = term(code, l, beta, g, s);
            if shape.contains(s) && !occ.contains(s) {
                blue += t;
                blue_abs += t.abs();
            }
            if occ.contains(s) && !shape.contains(s) {
                red += t;
                red_abs += t.abs();
            }
        }
    }
    (blue, red, blue_abs, red_abs)
}

fn close(got: f64, want: f64, scale: f64) -> bool {
    (got - want).abs() <= 1e-9 * scale.max(f64::MIN_POSITIVE)
}

#[test]
fn local_field_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x11f1e1d);
    let mut checked = 0;
    for case in 0..500 {
        let dims = common::random_dims(&mut rng, 12);
        let size = rng.gen_range(1..=dims.cell_count().min(40));
        let shape = common::random_shape(&mut rng, dims, size);
        let positions = common::random_positions(&mut rng, dims, size);
        let occ = CellSet::from_distinct(dims, positions.iter().copied()).unwrap();
        // cover all nine types evenly
        let code = (case % 9) as u8 + 1;
        let l = rng.gen_range(1.0..2000.0);
        let beta = rng.gen_range(0.01..5.0);
        let params = LightParams::new(l, beta, DiscountType::new(code).unwrap()).unwrap();
        let agent = positions[rng.gen_range(0..positions.len())];
        let field = local_field(agent, &shape, &occ, &params);
        for (g, v) in &field.entries {
            let (blue, red, blue_abs, red_abs) = brute(code, l, beta, &shape, &occ, *g);
            // relative to the summed magnitudes: linear types may cancel to ~0
            assert!(close(v.blue, blue, blue_abs), "case {case} type {code} blue at {g}: {} vs {blue}", v.blue);
            match v.red {
                Some(red_got) => {
                    assert!(shape.contains(agent));
                    assert!(close(red_got, red, red_abs), "case {case} type {code} red at {g}");
                }
                None => assert!(!shape.contains(agent)),
            }
            checked += 1;
        }
    }
    assert!(checked >= 500);
}

#[test]
fn full_field_agrees_with_local_field_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..200 {
        let dims = common::random_dims(&mut rng, 12);
        let size = rng.gen_range(1..=dims.cell_count().min(30));
        let shape = common::random_shape(&mut rng, dims, size);
        let positions = common::random_positions(&mut rng, dims, size);
        let occ = CellSet::from_distinct(dims, positions.iter().copied()).unwrap();
        let params: LightParams<f64> = LightParams::new(1000.0, 1.0, DiscountType::new((case % 9) as u8 + 1).unwrap()).unwrap();
        let full = full_field(&shape, &occ, &params);
        for &p in &positions {
            for (g, v) in local_field(p, &shape, &occ, &params).entries {
                assert_eq!(v.blue.to_bits(), full.blue_at(g).to_bits());
                if let Some(red) = v.red {
                    assert_eq!(red.to_bits(), full.red_at(g).to_bits());
                }
            }
        }
    }
}

#[test]
fn additivity_is_exact_in_rationals() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..500 {
        let dims = common::random_dims(&mut rng, 12);
        let size = rng.gen_range(2..=dims.cell_count().clamp(2, 25));
        if size > dims.cell_count() {
            continue;
        }
        let shape = common::random_shape(&mut rng, dims, size);
        let positions = common::random_positions(&mut rng, dims, size / 2);
        let occ = CellSet::from_distinct(dims, positions.iter().copied()).unwrap();
        let sources = LightSources::new(&shape, &occ);
        let code = (case % 9) as u8 + 1;
        let params: LightParams<Exact> = LightParams::new(
            Exact::from_u32(rng.gen_range(1..2000)).unwrap(),
            Exact::new(rng.gen_range(1..50).into(), rng.gen_range(1..10).into()),
            DiscountType::new(code).unwrap(),
        )
        .unwrap();
        let split = rng.gen_range(0..=sources.blue.len());
        let (a, b) = sources.blue.split_at(split);
        let g = GridPos::new(rng.gen_range(1..=dims.height), rng.gen_range(1..=dims.width));
        let whole = intensity_at(&params, g, &sources.blue);
        let parts = intensity_at(&params, g, a) + intensity_at(&params, g, b);
        assert_eq!(whole, parts, "type {code}");
        // and every single source contributes what the pairwise split predicts
        let sum = sources.blue.iter().fold(Exact::zero(), |acc, &s| acc + intensity_at(&params, g, &[s]));
        assert_eq!(whole, sum);
    }
}

#[test]
fn additivity_in_f64_under_fixed_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..200 {
        let dims = common::random_dims(&mut rng, 12);
        let size = rng.gen_range(1..=dims.cell_count().min(30));
        let shape = common::random_shape(&mut rng, dims, size);
        let occ = CellSet::empty(dims);
        let sources = LightSources::new(&shape, &occ);
        let params: LightParams<f64> = LightParams::new(1000.0, 0.7, DiscountType::new((case % 9) as u8 + 1).unwrap()).unwrap();
        let g = GridPos::new(rng.gen_range(1..=dims.height), rng.gen_range(1..=dims.width));
        let split = rng.gen_range(0..=sources.blue.len());
        let (a, b) = sources.blue.split_at(split);
        // continuing the fold over b from the partial sum over a
        let partial = intensity_at(&params, g, a);
        let continued = b.iter().fold(partial, |acc, &s| acc + intensity_at(&params, g, &[s]));
        assert_eq!(continued.to_bits(), intensity_at(&params, g, &sources.blue).to_bits());
    }
}
