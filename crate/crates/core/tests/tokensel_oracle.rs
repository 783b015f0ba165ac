use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokenrank::tokensel::{pool_average_2x2, prune_divprune, sample_uniform_2x2, select_kmeans};
use tokenrank::{Error, GridPos, SelectionConfig, TokenGrid};

fn dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (*x as f64 - *y as f64).powi(2))
        .sum()
}

/// Textbook greedy max-min: every step rescans the whole selected set.
fn reference_divprune(tokens: &[Vec<f32>], m: usize) -> Vec<usize> {
    let n = tokens.len();
    if m == n {
        return (0..n).collect();
    }
    let nearest_other = |i: usize| {
        (0..n)
            .filter(|&j| j != i)
            .map(|j| dist(&tokens[i], &tokens[j]))
            .fold(f64::INFINITY, f64::min)
    };
    let mut first = 0;
    for i in 1..n {
        if nearest_other(i) > nearest_other(first) {
            first = i;
        }
    }
    let mut chosen = vec![first];
    while chosen.len() < m {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if chosen.contains(&j) {
                continue;
            }
            let d = chosen
                .iter()
                .map(|&c| dist(&tokens[j], &tokens[c]))
                .fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((j, d));
            }
        }
        chosen.push(best.unwrap().0);
    }
    chosen.sort_unstable();
    chosen
}

#[test]
fn divprune_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut mismatches = 0;
    for trial in 0..500 {
        let n = rng.random_range(1..=10usize);
        let m = rng.random_range(1..=n.min(5));
        let dim = rng.random_range(1..=4usize);
        // every third trial uses a coarse lattice so distance ties occur
        let coarse = trial % 3 == 0;
        let tokens: Vec<Vec<f32>> = (0..n)
            .map(|_| {
                (0..dim)
                    .map(|_| {
                        if coarse {
                            rng.random_range(0..3) as f32
                        } else {
                            rng.random_range(-1.0f32..1.0)
                        }
                    })
                    .collect()
            })
            .collect();
        let grid = TokenGrid::dense(tokens.concat(), dim, 1, n as u16).unwrap();
        let got = prune_divprune(&grid, m).unwrap();
        let got_idx: Vec<usize> = got.positions().iter().map(|p| p.col as usize).collect();
        if got_idx != reference_divprune(&tokens, m) {
            mismatches += 1;
        }
        for (k, &i) in got_idx.iter().enumerate() {
            assert_eq!(got.token(k), tokens[i].as_slice());
        }
    }
    assert_eq!(mismatches, 0);
}

#[test]
fn window_arithmetic_for_small_grids() {
    for rows in 1..=9u16 {
        for cols in 1..=9u16 {
            let n = rows as usize * cols as usize;
            let grid =
                TokenGrid::dense((0..n * 2).map(|v| v as f32).collect(), 2, rows, cols).unwrap();
            let expected = rows.div_ceil(2) as usize * cols.div_ceil(2) as usize;
            let sampled = sample_uniform_2x2(&grid).unwrap();
            let pooled = pool_average_2x2(&grid).unwrap();
            assert_eq!(sampled.len(), expected, "{rows}x{cols}");
            assert_eq!(pooled.len(), expected, "{rows}x{cols}");
            assert_eq!(sampled.positions(), pooled.positions());
            for p in sampled.positions() {
                assert!(p.row % 2 == 0 && p.col % 2 == 0);
            }
            if rows % 2 == 0 && cols % 2 == 0 {
                assert_eq!(n, 4 * expected);
            }
        }
    }
}

#[test]
fn pooled_token_is_window_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (rows, cols, dim) = (5u16, 3u16, 3usize);
    let values: Vec<f32> = (0..rows as usize * cols as usize * dim)
        .map(|_| rng.random_range(-2.0f32..2.0))
        .collect();
    let grid = TokenGrid::dense(values.clone(), dim, rows, cols).unwrap();
    let pooled = pool_average_2x2(&grid).unwrap();
    for (k, p) in pooled.positions().iter().enumerate() {
        let mut members = Vec::new();
        for r in p.row..(p.row + 2).min(rows) {
            for c in p.col..(p.col + 2).min(cols) {
                members.push(r as usize * cols as usize + c as usize);
            }
        }
        for d in 0..dim {
            let mean: f64 = members
                .iter()
                .map(|&i| values[i * dim + d] as f64)
                .sum::<f64>()
                / members.len() as f64;
            assert_eq!(pooled.token(k)[d], mean as f32);
        }
    }
}

#[test]
fn kmeans_selection_keeps_medoid_positions() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let values: Vec<f32> = (0..36 * 4)
        .map(|_| rng.random_range(-1.0f32..1.0))
        .collect();
    let grid = TokenGrid::dense(values, 4, 6, 6).unwrap();
    let sel = select_kmeans(&grid, 7, 3).unwrap();
    assert_eq!(sel.len(), 7);
    assert_eq!(sel, select_kmeans(&grid, 7, 3).unwrap());
    let idx: Vec<usize> = sel
        .positions()
        .iter()
        .map(|p| p.row as usize * 6 + p.col as usize)
        .collect();
    assert!(idx.windows(2).all(|w| w[0] < w[1]));
    // each medoid's source token is nearer its own centroid than any other centroid is
    for (k, &i) in idx.iter().enumerate() {
        let own = dist(grid.token(i), sel.token(k));
        for j in 0..sel.len() {
            assert!(own <= dist(grid.token(i), sel.token(j)) + 1e-9);
        }
    }
}

#[test]
fn selection_errors() {
    let grid = TokenGrid::dense(vec![0.0; 8], 2, 2, 2).unwrap();
    assert!(matches!(
        prune_divprune(&grid, 5),
        Err(Error::TargetTooLarge { .. })
    ));
    let sparse = TokenGrid::new(
        vec![0.0; 4],
        2,
        vec![GridPos::new(0, 0), GridPos::new(1, 1)],
        2,
        2,
    )
    .unwrap();
    assert!(matches!(
        sample_uniform_2x2(&sparse),
        Err(Error::NonRectangularGrid(_))
    ));
    for s in ["none", "prune:150", "cluster:70:9", "sample2x2", "pool2x2"] {
        assert_eq!(s.parse::<SelectionConfig>().unwrap().to_string(), s);
    }
    assert!("prune:0".parse::<SelectionConfig>().is_err());
}
