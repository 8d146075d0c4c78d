use proptest::prelude::*;

use synthforge_core::fractal2d::{
    accept_system, chaos_game, generate_class, sample_ifs, sierpinski, AffineMap, FractalConfig, IfsSystem,
};
use synthforge_core::rng::RngStream;

/// Fill rate of the Sierpinski attractor by exhaustive address enumeration:
/// every depth-`depth` composition of the three half-scale maps applied to
/// the origin, splatted into the unit bounding square.
fn sierpinski_oracle(resolution: usize, depth: u32) -> f64 {
    let mut pts = vec![(0.0f64, 0.0f64)];
    for _ in 0..depth {
        pts = pts
            .iter()
            .flat_map(|&(x, y)| [(0.5 * x, 0.5 * y), (0.5 * x + 0.5, 0.5 * y), (0.5 * x, 0.5 * y + 0.5)])
            .collect();
    }
    let last = (resolution - 1) as f64;
    let mut grid = vec![false; resolution * resolution];
    // The attractor is the triangle (0,0), (1,0), (0,1), whose bounding square is [0,1]².
    for (x, y) in pts {
        let c = (x * last).round() as usize;
        let r = (y * last).round() as usize;
        grid[r * resolution + c] = true;
    }
    grid.iter().filter(|&&v| v).count() as f64 / (resolution * resolution) as f64
}

#[test]
fn sierpinski_matches_enumeration_oracle() {
    let oracle = sierpinski_oracle(256, 12);
    assert!((0.05..=0.35).contains(&oracle), "{oracle}");
    let img = chaos_game(&sierpinski(), 100_000, 256, RngStream::new(1, 0)).unwrap();
    let fill = img.fill_rate();
    assert!((fill - oracle).abs() <= 0.05, "chaos game {fill} vs oracle {oracle}");
}

#[test]
fn acceptance_is_monotone_over_sampled_systems() {
    let cfg = FractalConfig::default();
    let thresholds = [0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4];
    let mut accepted = vec![0usize; thresholds.len()];
    let mut rendered = 0;
    for s in 0..500u64 {
        let sys = sample_ifs(RngStream::new(77, s), &cfg);
        let Ok(img) = chaos_game(&sys, 20_000, 128, RngStream::new(78, s)) else {
            continue;
        };
        rendered += 1;
        let verdicts: Vec<bool> = thresholds.iter().map(|&t| accept_system(&img, t)).collect();
        for (k, &v) in verdicts.iter().enumerate() {
            accepted[k] += v as usize;
            if v {
                assert!(verdicts[..k].iter().all(|&w| w), "system {s}");
            }
        }
    }
    assert!(rendered > 0);
    assert!(accepted.windows(2).all(|w| w[0] >= w[1]), "{accepted:?}");
}

#[test]
fn class_generation_is_deterministic() {
    let cfg = FractalConfig { points: 20_000, resolution: 64, ..Default::default() };
    let a = generate_class(&cfg, 3, 7, 4).unwrap();
    let b = generate_class(&cfg, 3, 7, 4).unwrap();
    assert_eq!(a.record, b.record);
    assert!(a.images.iter().zip(&b.images).all(|(x, y)| x.pixels == y.pixels));
}

fn map() -> impl Strategy<Value = AffineMap> {
    (prop::array::uniform4(-0.7f64..0.7), prop::array::uniform2(-1.0f64..1.0)).prop_map(|(m, t)| AffineMap {
        matrix: [[m[0], m[1]], [m[2], m[3]]],
        translation: t,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn doubling_translations_keeps_the_image(maps in prop::collection::vec(map(), 2..5), seed in any::<u64>()) {
        let sys = IfsSystem::uniform(maps.clone()).unwrap();
        let scaled = IfsSystem::uniform(
            maps.iter().map(|m| AffineMap { translation: [2.0 * m.translation[0], 2.0 * m.translation[1]], ..*m }).collect(),
        ).unwrap();
        let a = chaos_game(&sys, 5_000, 64, RngStream::new(seed, 0));
        let b = chaos_game(&scaled, 5_000, 64, RngStream::new(seed, 0));
        if let (Ok(a), Ok(b)) = (a, b) {
            // Doubling is exact in floating point, so the normalized grids agree exactly.
            prop_assert_eq!(a.pixels, b.pixels);
        }
    }
}
