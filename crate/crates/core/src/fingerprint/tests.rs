use super::*;
use crate::features::{vgg16_model, VggConfig};
use ndarray::Array3;
use proptest::prelude::*;
use rand::Rng as _;

fn narrow() -> Backbone {
    let cfg = VggConfig {
        width_divisor: 8,
        ..VggConfig::default()
    };
    Backbone::from_model(&vgg16_model(&cfg).unwrap()).unwrap()
}

/// Elliptical particles of random size, elongation and texture.
fn particles(n: usize, seed: u64) -> Vec<Micrograph> {
    let mut r = crate::rng::rng(seed);
    (0..n)
        .map(|i| {
            let (h, w) = (r.random_range(16..48), r.random_range(16..48));
            let (ry, rx) = (h as f64 / 2.0 - 1.0, w as f64 / 2.0 - 1.0);
            let grain = r.random_range(0.0..80.0);
            let level = r.random_range(120.0..220.0);
            let px = Array3::from_shape_fn((h, w, 1), |(y, x, _)| {
                let (dy, dx) = ((y as f64 - ry) / ry, (x as f64 - rx) / rx);
                if dy * dy + dx * dx <= 1.0 {
                    (level + grain * ((x * 7 + y * 3) % 5) as f64 / 5.0).min(255.0) as u8
                } else {
                    40
                }
            });
            Micrograph::new_unchecked_size(format!("p{i}"), px).unwrap()
        })
        .collect()
}

fn config() -> FingerprintConfig {
    FingerprintConfig {
        patch_size: 32,
        pca_dim: 8,
        tsne_epochs: 300,
        seed: 5,
        ..FingerprintConfig::default()
    }
}

fn total(v: &[f64]) -> f64 {
    v.iter().sum()
}

#[test]
fn defaults_follow_the_demonstration() {
    let c = FingerprintConfig::default();
    assert_eq!((c.k, c.pca_dim, c.grid), (8, 32, 32));
}

#[test]
fn fingerprint_is_normalized_and_self_consistent() {
    let b = narrow();
    let patches = particles(30, 1);
    let (fp, model) = build_fingerprint(&b, &patches, &config()).unwrap();
    assert_eq!(fp.histogram.len(), 8);
    assert_eq!(fp.density.len(), 32 * 32);
    assert!((total(&fp.histogram) - 1.0).abs() <= 1e-9);
    assert!((total(&fp.density) - 1.0).abs() <= 1e-9);
    assert!(fp.histogram.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(assign_to_fingerprint(&fp, &model, &b, &patches).unwrap(), fp.histogram);
    assert_eq!(fingerprint_distance(&fp, &fp).unwrap(), 0.0);

    let one = assign_to_fingerprint(&fp, &model, &b, &patches[..1]).unwrap();
    assert_eq!(one.iter().filter(|&&v| v == 1.0).count(), 1);
    assert!((total(&one) - 1.0).abs() < 1e-12);
}

#[test]
fn assignment_matches_exhaustive_oracle() {
    let b = narrow();
    let (_, model) = build_fingerprint(&b, &particles(20, 2), &config()).unwrap();
    let fresh = particles(15, 3);
    let got = assign_patches(&model, &b, &fresh).unwrap();
    for (p, &g) in fresh.iter().zip(&got) {
        let v = b.feature_vector(&resize_square(p, 32).unwrap(), &model.layer).unwrap();
        let x = Array1::from_iter(v.values.iter().map(|&f| f64::from(f)));
        let z = model.pca.project(x.view()).unwrap();
        let d: Vec<f64> = model
            .centroids
            .rows()
            .into_iter()
            .map(|c| c.iter().zip(z.iter()).map(|(a, b)| (a - b).powi(2)).sum())
            .collect();
        let best = (0..d.len()).fold(0, |m, j| if d[j] < d[m] { j } else { m });
        assert_eq!(g, best);
    }
}

#[test]
fn identical_patches_give_unit_mass() {
    let b = narrow();
    let p = particles(1, 4).pop().unwrap();
    let patches: Vec<Micrograph> = (0..10).map(|_| p.clone()).collect();
    let (fp, _) = build_fingerprint(&b, &patches, &config()).unwrap();
    assert_eq!(fp.histogram[0], 1.0);
    assert!(fp.histogram[1..].iter().all(|&v| v == 0.0));
    assert!((total(&fp.density) - 1.0).abs() <= 1e-9);
}

#[test]
fn duplication_and_permutation_leave_histogram_unchanged() {
    let b = narrow();
    let patches = particles(16, 6);
    let (fp, model) = build_fingerprint(&b, &patches, &config()).unwrap();

    let doubled: Vec<Micrograph> = patches.iter().chain(&patches).cloned().collect();
    let (fp2, model2) = build_fingerprint(&b, &doubled, &config()).unwrap();
    assert_eq!(fp2.histogram, fp.histogram);
    assert_eq!(model2, model);

    let mut shuffled = patches.clone();
    shuffled.reverse();
    shuffled.swap(0, 5);
    let (fp3, _) = build_fingerprint(&b, &shuffled, &config()).unwrap();
    assert_eq!(fp3, fp);
}

#[test]
fn models_round_trip_and_reference_comparison() {
    let b = narrow();
    let (fp, model) = build_fingerprint(&b, &particles(20, 7), &config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    model.save(dir.path()).unwrap();
    let back = ClusterModel::load(dir.path()).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.ids(), fp.models);
    let path = dir.path().join("fp.json");
    fp.save(&path).unwrap();
    assert_eq!(PowderFingerprint::load(&path).unwrap(), fp);

    let other = fingerprint_against(&model, &b, &particles(12, 8), &config()).unwrap();
    assert!((total(&other.density) - 1.0).abs() <= 1e-9);
    let d = fingerprint_distance(&fp, &other).unwrap();
    assert!((0.0..=1.0).contains(&d));
    assert_eq!(d, fingerprint_distance(&other, &fp).unwrap());

    let (unrelated, _) = build_fingerprint(&b, &particles(20, 9), &config()).unwrap();
    assert!(fingerprint_distance(&fp, &unrelated).is_err());
}

#[test]
fn too_few_patches_is_an_error() {
    let b = narrow();
    assert!(build_fingerprint(&b, &particles(5, 1), &config()).is_err());
}

#[test]
fn disjoint_histograms_are_maximally_distant() {
    assert_eq!(histogram_distance(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
    assert_eq!(histogram_distance(&[0.5, 0.5], &[0.5, 0.5]), 0.0);
}

fn histogram(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, k).prop_filter_map("nonzero", |v| {
        let s: f64 = v.iter().sum();
        (s > 0.0).then(|| v.iter().map(|x| x / s).collect())
    })
}

proptest! {
    #[test]
    fn distance_is_a_bounded_symmetric_overlap(a in histogram(8), b in histogram(8)) {
        let d = histogram_distance(&a, &b);
        let direct = 1.0 - a.iter().zip(&b).map(|(x, y)| if x < y { *x } else { *y }).sum::<f64>();
        prop_assert!((d - direct).abs() <= 1e-12);
        prop_assert_eq!(d, histogram_distance(&b, &a));
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(histogram_distance(&a, &a), 0.0);
    }

    #[test]
    fn density_grid_is_normalized(points in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..200), g in 1usize..40) {
        let coords = Array2::from_shape_fn((points.len(), 2), |(i, j)| if j == 0 { points[i].0 } else { points[i].1 });
        let (d, _) = density_grid(&coords, g);
        prop_assert_eq!(d.len(), g * g);
        prop_assert!((d.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(d.iter().all(|&v| v >= 0.0));
    }
}
