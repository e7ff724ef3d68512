use deadbeat::{Grid, Interval};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// linear search over cell boxes, half-open except on the upper face of the box
fn containing_cells(grid: &Grid, x: &[f64]) -> Vec<usize> {
    (0..grid.total_cells())
        .filter(|&c| {
            let coords = grid.coords(c).unwrap();
            coords.iter().enumerate().all(|(d, &k)| {
                let b = grid.bounds()[d];
                let n = grid.cells_per_dim()[d];
                let w = b.width() / n as f64;
                let lo = b.lo + k as f64 * w;
                let hi = if k + 1 == n { b.hi } else { b.lo + (k + 1) as f64 * w };
                x[d] >= lo && (x[d] < hi || (k + 1 == n && x[d] <= hi))
            })
        })
        .collect()
}

#[test]
fn every_point_in_the_box_lies_in_exactly_one_cell() {
    let grid = Grid::new(
        vec![Interval::new(-1.0, 1.0), Interval::new(-0.5, 2.0), Interval::new(-3.0, 0.25)],
        vec![7, 5, 9],
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut mismatched = 0;
    for i in 0..10_000 {
        let x: Vec<f64> = grid
            .bounds()
            .iter()
            .map(|b| match i % 50 {
                // snap some points to box faces
                0 => b.lo,
                1 => b.hi,
                _ => rng.random_range(b.lo..=b.hi),
            })
            .collect();
        let brute = containing_cells(&grid, &x);
        assert_eq!(brute.len(), 1, "{x:?} in {brute:?}");
        if grid.index_of(&x) != Some(brute[0]) {
            mismatched += 1;
        }
    }
    // floor((x − lo)/w) and the boundary comparison can disagree by one ulp
    // on exact cell faces only
    assert!(mismatched <= 2, "{mismatched} points disagree");
}

#[test]
fn points_outside_have_no_cell() {
    let grid = Grid::new(vec![Interval::new(-1.0, 1.0); 2], vec![4, 4]).unwrap();
    for x in [[1.0 + 1e-12, 0.0], [0.0, -1.5], [f64::NAN, 0.0], [f64::INFINITY, 0.0]] {
        assert_eq!(grid.index_of(&x), None);
    }
    assert_eq!(grid.index_of(&[1.0, 1.0]), Some(15));
    assert_eq!(grid.index_of(&[-1.0, -1.0]), Some(0));
}

#[test]
fn centers_tile_the_box() {
    let grid = Grid::new(vec![Interval::new(0.0, 3.0), Interval::new(-1.0, 1.0)], vec![3, 4]).unwrap();
    let centers: Vec<Vec<f64>> = (0..12).map(|c| grid.center_of(c).unwrap()).collect();
    assert_eq!(centers[0], vec![0.5, -0.75]);
    assert_eq!(centers[1], vec![0.5, -0.25]);
    assert_eq!(centers[4], vec![1.5, -0.75]);
    assert_eq!(centers[11], vec![2.5, 0.75]);
}
