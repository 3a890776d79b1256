use std::collections::VecDeque;
use std::path::PathBuf;

use convex_tomo::grid::Geometry;
use convex_tomo::phantoms::{Glyph, Mask2, Phantom, PhantomKind, PhantomSpec};

fn fixture(g: Glyph) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/masks").join(format!("{}.pbm", g.name()))
}

#[test]
fn fixtures_match_the_generator() {
    for g in Glyph::ALL {
        let stored = Mask2::read(&fixture(g)).unwrap();
        assert_eq!(stored, g.mask(), "fixture for {} is stale", g.name());
    }
}

/// Number of 6-connected components of the background voxels.
fn background_components(inside: &[bool], n: [usize; 3]) -> usize {
    let idx = |i: usize, j: usize, l: usize| (l * n[1] + j) * n[0] + i;
    let mut seen = vec![false; inside.len()];
    let mut components = 0;
    for start in 0..inside.len() {
        if inside[start] || seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            let (i, j, l) = (p % n[0], (p / n[0]) % n[1], p / (n[0] * n[1]));
            let mut visit = |q: usize| {
                if !inside[q] && !seen[q] {
                    seen[q] = true;
                    queue.push_back(q);
                }
            };
            if i > 0 {
                visit(idx(i - 1, j, l));
            }
            if i + 1 < n[0] {
                visit(idx(i + 1, j, l));
            }
            if j > 0 {
                visit(idx(i, j - 1, l));
            }
            if j + 1 < n[1] {
                visit(idx(i, j + 1, l));
            }
            if l > 0 {
                visit(idx(i, j, l - 1));
            }
            if l + 1 < n[2] {
                visit(idx(i, j, l + 1));
            }
        }
    }
    components
}

fn voxelize(spec: &PhantomSpec, res: usize) -> (Vec<bool>, [usize; 3]) {
    let g = Geometry::default();
    let ph = Phantom::from_spec(spec, &g).unwrap();
    let n = [res, res, res];
    let c = |k: usize| (k as f64 + 0.5) / res as f64;
    let mut inside = Vec::with_capacity(res * res * res);
    for l in 0..res {
        for j in 0..res {
            for i in 0..res {
                inside.push(ph.in_inclusion([c(i), c(j), g.z_bottom + c(l)]));
            }
        }
    }
    (inside, n)
}

#[test]
fn letter_a_encloses_a_void_at_slab_height() {
    // A mid-height slab through the extrusion: the triangle above the bar is
    // background that cannot reach the outside without crossing the letter.
    let spec = PhantomSpec::letter(Glyph::A);
    let (inside, n) = voxelize(&spec, 64);
    let slab: Vec<bool> = inside[32 * 64 * 64..33 * 64 * 64].to_vec();
    assert_eq!(background_components(&slab, [64, 64, 1]), 2);
    // Full volume: the hole is open along z, so the background is connected.
    assert_eq!(background_components(&inside, n), 1);
    // C and Ω have no enclosed void.
    for g in [Glyph::C, Glyph::Omega] {
        let (inside, _) = voxelize(&PhantomSpec::letter(g), 64);
        let slab: Vec<bool> = inside[32 * 64 * 64..33 * 64 * 64].to_vec();
        assert_eq!(background_components(&slab, [64, 64, 1]), 1, "{}", g.name());
    }
}

#[test]
fn letter_is_not_convex() {
    let spec = PhantomSpec::letter(Glyph::A);
    let ph = Phantom::from_spec(&spec, &Geometry::default()).unwrap();
    // Two points on the legs whose midpoint is in the hole.
    let left = [0.36, 0.55, 0.5];
    let right = [0.64, 0.55, 0.5];
    let mid = [0.5, 0.55, 0.5];
    assert!(ph.in_inclusion(left) && ph.in_inclusion(right) && !ph.in_inclusion(mid));
}

#[test]
fn mask_path_and_builtin_agree() {
    let g = Geometry::default();
    let builtin = Phantom::from_spec(&PhantomSpec::letter(Glyph::Omega), &g).unwrap();
    let from_file = Phantom::from_spec(
        &PhantomSpec {
            kind: PhantomKind::Letter,
            mask_path: Some(fixture(Glyph::Omega)),
            ..PhantomSpec::default()
        },
        &g,
    )
    .unwrap();
    assert_eq!(builtin, from_file);
}
