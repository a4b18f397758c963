//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Pass criterion numbers as arguments to run a subset.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use mct_core::classify::{
    cross_validate, relative_rmse, select_lambda, train_regressor, LinearClassifier, SvmConfig, Transform,
};
use mct_core::cluster::{
    compute_affinities, kmeans_fit, knn_search, knn_search_id, separation_ratio, tsne_embed, KMeansConfig, TsneConfig,
};
use mct_core::dataio::{FeatureStore, Micrograph};
use mct_core::features::{fit_pca_matrix, vgg16_model, Backbone, Encoding, FeatureVector, Provenance, VggConfig};
use mct_core::fingerprint::{build_fingerprint, fingerprint_distance, FingerprintConfig};
use mct_core::instances::{
    connected_components, match_instances, pairwise_iou, watershed_split, Connectivity, InstanceSet,
    DEFAULT_MIN_SEED_DISTANCE,
};
use mct_core::rng::{derive_named, derive_seed, rng};
use mct_core::segment::{
    evaluate_mask, predict_mask, train_pixel_classifier, two_texture_image, PixelTrainConfig,
};
use mct_core::synthgen::dataset::render_sample;
use mct_core::synthgen::{astm_grain_number, potts_evolve, RenderStyle};
use ndarray::{s, Array2, Axis};
use rand::Rng as _;
use rand_distr::StandardNormal;

const SEED: u64 = 2024;

// criterion 1
const SYNTH_COUNT: usize = 1000;
const SYNTH_TRAIN: usize = 800;
const SYNTH_SIZE: usize = 128;
const FRACTIONS: [f64; 3] = [0.0, 0.2, 0.4];
const SWEEPS: [usize; 10] = [10, 20, 35, 50, 75, 100, 150, 200, 300, 400];
const MAX_RELATIVE_RMSE: f64 = 0.08;
const MAX_ASTM_ERROR: f64 = 0.5;
// criterion 2
const PER_CLASS: usize = 200;
const MIN_CV_ACCURACY: f64 = 0.95;
// criterion 3
const TEXTURE_SIZE: usize = 128;
const MIN_PIXEL_ACCURACY: f64 = 0.90;
// criteria 6, 7, 9
const ENTROPY_TOL: f64 = 1e-5;
const MIN_SEPARATION: f64 = 3.0;
const PCA_TOL: f64 = 1e-6;
const NORMALIZATION_TOL: f64 = 1e-9;
const INERTIA_TOL: f64 = 1e-9;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn backbone() -> Backbone {
    Backbone::from_model(&vgg16_model(&VggConfig::default()).expect("backbone")).expect("backbone")
}

fn features(b: &Backbone, images: &[Micrograph]) -> Array2<f32> {
    let layer = b.default_layer().name.clone();
    let rows: Vec<Vec<f32>> = images
        .iter()
        .map(|m| b.feature_vector(m, &layer).expect("features").values)
        .collect();
    Array2::from_shape_fn((rows.len(), rows[0].len()), |(i, j)| rows[i][j])
}

/// Ridge candidates scaled to the mean squared centered row norm.
fn ridge_grid(x: ndarray::ArrayView2<f32>) -> Vec<f64> {
    let mean = x.mapv(f64::from).mean_axis(Axis(0)).expect("rows");
    let scale = x
        .rows()
        .into_iter()
        .map(|r| r.iter().zip(mean.iter()).map(|(v, m)| (f64::from(*v) - m).powi(2)).sum::<f64>())
        .sum::<f64>()
        / x.nrows() as f64;
    (-5..=2).map(|e| scale * 10f64.powi(e)).collect()
}

fn fit_predict(x: &Array2<f32>, y: &[f64], seed: u64) -> Vec<f64> {
    let train = x.slice(s![..SYNTH_TRAIN, ..]);
    let search = select_lambda(train, &y[..SYNTH_TRAIN], &ridge_grid(train), 5, seed, Transform::Log).expect("lambda");
    let model = train_regressor(train, &y[..SYNTH_TRAIN], search.best, Transform::Log).expect("ridge");
    model.predict_rows(x.slice(s![SYNTH_TRAIN.., ..])).expect("predict")
}

fn grain_size_regression() -> Outcome {
    let b = backbone();
    let maps: Vec<_> = (0..SYNTH_COUNT)
        .map(|i| {
            let seed = derive_seed(SEED, i as u64);
            let sweeps = SWEEPS[i % SWEEPS.len()];
            let map = potts_evolve(SYNTH_SIZE, SYNTH_SIZE, 64, sweeps, derive_named(seed, "potts")).expect("potts");
            (map, sweeps, seed)
        })
        .collect();
    let mut rmse = Vec::new();
    let mut astm = Vec::new();
    for f in FRACTIONS {
        let mut images = Vec::with_capacity(SYNTH_COUNT);
        let (mut d, mut l) = (Vec::new(), Vec::new());
        for (i, (map, sweeps, seed)) in maps.iter().enumerate() {
            let sample = render_sample(&format!("g{i}"), map.clone(), *sweeps, f, *seed, &RenderStyle::default())
                .expect("render");
            d.push(sample.stats.mean_diameter);
            l.push(sample.stats.mean_intercept);
            images.push(sample.micrograph);
        }
        let x = features(&b, &images);
        drop(images);
        let pred_d = fit_predict(&x, &d, derive_named(SEED, "lambda-d"));
        let pred_l = fit_predict(&x, &l, derive_named(SEED, "lambda-l"));
        rmse.push(relative_rmse(&pred_d, &d[SYNTH_TRAIN..]).expect("rmse"));
        // one pixel is one micrometer
        let g_err: f64 = pred_l
            .iter()
            .zip(&l[SYNTH_TRAIN..])
            .map(|(p, t)| (astm_grain_number(p / 1000.0).unwrap() - astm_grain_number(t / 1000.0).unwrap()).abs())
            .sum::<f64>()
            / pred_l.len() as f64;
        astm.push(g_err);
    }
    let a = rmse[0] <= MAX_RELATIVE_RMSE;
    let monotone = rmse.windows(2).all(|w| w[1] >= w[0]);
    let c = astm.iter().all(|e| *e <= MAX_ASTM_ERROR);
    check(
        a && monotone && c,
        format!(
            "relative RMSE {} (f=0 limit {MAX_RELATIVE_RMSE}, non-decreasing: {monotone}); mean |ΔG| {} (limit {MAX_ASTM_ERROR})",
            fmt_list(&rmse),
            fmt_list(&astm)
        ),
    )
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Three rendering styles with distinct grain scale, contrast and blur.
fn style_classes() -> Vec<(&'static str, [usize; 2], RenderStyle)> {
    vec![
        ("fine", [10, 30], RenderStyle::default()),
        (
            "coarse",
            [200, 400],
            RenderStyle {
                matrix_gray: 180,
                boundary_gray: 60,
                ..RenderStyle::default()
            },
        ),
        (
            "etched",
            [40, 120],
            RenderStyle {
                matrix_gray: 150,
                boundary_gray: 20,
                blur_sigma: 1.6,
                noise_sigma: 10.0,
                seed: 0,
            },
        ),
    ]
}

fn texture_classification() -> Outcome {
    let b = backbone();
    let mut r = rng(derive_named(SEED, "styles"));
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (name, range, style) in style_classes() {
        for i in 0..PER_CLASS {
            let seed = r.random::<u64>();
            let sweeps = r.random_range(range[0]..=range[1]);
            let map = potts_evolve(SYNTH_SIZE, SYNTH_SIZE, 64, sweeps, seed).expect("potts");
            let sample = render_sample(&format!("{name}{i}"), map, sweeps, 0.0, seed, &style).expect("render");
            images.push(sample.micrograph);
            labels.push(name.to_string());
        }
    }
    let x = features(&b, &images);
    let cv = cross_validate::<f32, LinearClassifier<f32>>(x.view(), &labels, 5, SEED, &SvmConfig::default())
        .expect("cross-validation");
    check(
        cv.mean_accuracy >= MIN_CV_ACCURACY,
        format!(
            "5-fold accuracy {:.4} ± {:.4} (limit {MIN_CV_ACCURACY})",
            cv.mean_accuracy, cv.std_accuracy
        ),
    )
}

fn semantic_segmentation() -> Outcome {
    let b = backbone();
    let data: Vec<_> = (0..7)
        .map(|i| two_texture_image(&format!("t{i}"), TEXTURE_SIZE, derive_seed(SEED, i)).expect("texture"))
        .collect();
    let pc = train_pixel_classifier(&b, &data[..5], &PixelTrainConfig::default(), SEED).expect("train");
    let (mut right, mut total) = (0.0, 0.0);
    let mut each = Vec::new();
    for (m, truth) in &data[5..] {
        let rep = evaluate_mask(&predict_mask(&pc, &b, m).expect("predict"), truth).expect("evaluate");
        let n = (truth.height() * truth.width()) as f64;
        right += rep.accuracy * n;
        total += n;
        each.push(rep.accuracy);
    }
    let acc = right / total;
    check(
        acc >= MIN_PIXEL_ACCURACY,
        format!("held-out pixel accuracy {acc:.4} per image {} (limit {MIN_PIXEL_ACCURACY})", fmt_list(&each)),
    )
}

fn visual_search() -> Outcome {
    let mut r = rng(derive_named(SEED, "search"));
    let prov = Provenance::new("random", "none", Encoding::Raw);
    for trial in 0..100 {
        let n = r.random_range(1..=1000);
        let dim = r.random_range(1..=16);
        let mut store = FeatureStore::new(prov.clone(), dim).expect("store");
        for i in 0..n {
            let v: Vec<f32> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
            store.push_raw(format!("r{i:04}"), &v).expect("push");
        }
        for i in 0..n {
            let id = &store.ids()[i];
            let hit = &knn_search_id(id, &store, 1).expect("search").neighbors[0];
            if &hit.id != id || hit.distance != 0.0 {
                return Err(format!("store {trial}: record {id} retrieved {} at {}", hit.id, hit.distance));
            }
        }
        for _ in 0..5 {
            let q: Vec<f32> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
            let k = r.random_range(1..=n);
            let got = knn_search(&FeatureVector::new(q.clone(), prov.clone()).unwrap(), &store, k).expect("search");
            let mut oracle: Vec<(f64, String)> = (0..n)
                .map(|i| {
                    let d2: f64 = store.row(i).iter().zip(&q).map(|(a, b)| (f64::from(*a) - f64::from(*b)).powi(2)).sum();
                    (d2.sqrt(), store.ids()[i].clone())
                })
                .collect();
            oracle.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
            let got: Vec<(f64, String)> = got.neighbors.into_iter().map(|nb| (nb.distance, nb.id)).collect();
            if got != oracle[..k] {
                return Err(format!("store {trial}: top-{k} differs from exhaustive sort"));
            }
        }
    }
    Ok("100 stores: self-retrieval at distance 0 and exhaustive-sort agreement".into())
}

fn kmeans_checks() -> Outcome {
    let mut r = rng(derive_named(SEED, "kmeans"));
    for run in 0..50u64 {
        let n = r.random_range(20..200);
        let x = Array2::from_shape_fn((n, 3), |_| r.random_range(-5.0..5.0));
        let cfg = KMeansConfig {
            restarts: 1,
            ..KMeansConfig::new(r.random_range(2..8), run)
        };
        let m = kmeans_fit(x.view(), &cfg).expect("kmeans");
        if let Some(w) = m.history.windows(2).find(|w| w[1] > w[0]) {
            return Err(format!("run {run}: inertia rose from {} to {}", w[0], w[1]));
        }
    }
    let pts: Vec<[f64; 2]> = (0..12)
        .map(|i| {
            let c = if i < 6 { 0.0 } else { 6.0 };
            [c + r.random_range(-1.0..1.0), c + r.random_range(-1.0..1.0)]
        })
        .collect();
    let x = Array2::from_shape_fn((12, 2), |(i, j)| pts[i][j]);
    let m = kmeans_fit(x.view(), &KMeansConfig::new(2, SEED)).expect("kmeans");
    let best = (1u32..(1 << 11))
        .map(|mask| {
            let mut inertia = 0.0;
            for side in [0, 1] {
                let members: Vec<&[f64; 2]> = (0..12).filter(|&i| ((mask >> i) & 1) == side).map(|i| &pts[i]).collect();
                let c = [0, 1].map(|d| members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64);
                inertia += members.iter().map(|p| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sum::<f64>();
            }
            inertia
        })
        .fold(f64::INFINITY, f64::min);
    check(
        (m.inertia - best).abs() <= INERTIA_TOL,
        format!("50 monotone runs; two-blob inertia {:.12} vs exhaustive {best:.12}", m.inertia),
    )
}

fn tsne_checks() -> Outcome {
    let mut r = rng(derive_named(SEED, "tsne"));
    let mut worst = 0.0f64;
    for run in 0..20u64 {
        let n = r.random_range(30..80);
        let x: Array2<f64> = Array2::from_shape_fn((n, 5), |_| r.random_range(-3.0..3.0));
        let perplexity = r.random_range(5.0..20.0);
        let a = compute_affinities(x.view(), perplexity).expect("affinities");
        for i in 0..n {
            let d: Vec<f64> = (0..n)
                .map(|j| x.row(i).iter().zip(x.row(j).iter()).map(|(p, q)| (p - q).powi(2)).sum())
                .collect();
            let w: Vec<f64> = (0..n).map(|j| if j == i { 0.0 } else { (-a.betas[i] * d[j]).exp() }).collect();
            let z: f64 = w.iter().sum();
            let h: f64 = -w.iter().filter(|v| **v > 0.0).map(|v| (v / z) * (v / z).log2()).sum::<f64>();
            worst = worst.max((h - perplexity.log2()).abs());
        }
        let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let e = tsne_embed(x.view(), &ids, &TsneConfig::new(perplexity, 400, run)).expect("tsne");
        if !(e.kl_divergence < e.kl_after_exaggeration) {
            return Err(format!(
                "run {run}: final KL {} not below end-of-exaggeration KL {}",
                e.kl_divergence, e.kl_after_exaggeration
            ));
        }
    }
    if worst > ENTROPY_TOL {
        return Err(format!("row entropy off by {worst:e} bits"));
    }
    let mut groups = Vec::new();
    let x = Array2::from_shape_fn((90, 10), |(i, j)| {
        let center = if j == i / 30 { 20.0 } else { 0.0 };
        center + r.sample::<f64, _>(StandardNormal)
    });
    for i in 0..90 {
        groups.push(i / 30);
    }
    let ids: Vec<String> = (0..90).map(|i| i.to_string()).collect();
    let e = tsne_embed(x.view(), &ids, &TsneConfig::new(20.0, 1000, SEED)).expect("tsne");
    let ratio = separation_ratio(&e.coords, &groups);
    check(
        ratio >= MIN_SEPARATION,
        format!("entropy error ≤ {worst:.1e} bits; KL decreased in 20 runs; blob separation {ratio:.2} (limit {MIN_SEPARATION})"),
    )
}

fn pca_checks() -> Outcome {
    let mut r = rng(derive_named(SEED, "pca"));
    let mut worst_orth = 0.0f64;
    let mut worst_var = 0.0f64;
    for _ in 0..20 {
        let n = r.random_range(10..60);
        let dim = r.random_range(2..12);
        let mix: Array2<f64> = Array2::from_shape_fn((dim, dim), |_| r.random_range(-1.0..1.0));
        let x = Array2::from_shape_fn((n, dim), |_| r.random_range(-1.0..1.0)).dot(&mix);
        let d = r.random_range(1..=dim.min(n - 1));
        let m = fit_pca_matrix(x.view(), None, d, Provenance::new("random", "none", Encoding::Raw)).expect("pca");
        let gram = m.components.dot(&m.components.t());
        for i in 0..d {
            for j in 0..d {
                let want = if i == j { 1.0 } else { 0.0 };
                worst_orth = worst_orth.max((gram[[i, j]] - want).abs());
            }
        }
        let mean = x.mean_axis(Axis(0)).unwrap();
        let centered = &x - &mean;
        let cov = centered.t().dot(&centered) / (n - 1) as f64;
        let eig = nalgebra::DMatrix::from_fn(dim, dim, |i, j| cov[[i, j]]).symmetric_eigen();
        let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        values.sort_by(|a, b| b.total_cmp(a));
        let proj = m.project_rows(x.view()).expect("project");
        for c in 0..d {
            let col = proj.column(c);
            let mu = col.mean().unwrap();
            let var = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1) as f64;
            worst_var = worst_var.max((var - values[c]).abs() / values[c].abs().max(f64::MIN_POSITIVE));
        }
    }
    check(
        worst_orth <= PCA_TOL && worst_var <= PCA_TOL,
        format!("orthonormality error {worst_orth:.1e}; variance relative error {worst_var:.1e} (limit {PCA_TOL:e})"),
    )
}

fn flood_fill(mask: &[bool], h: usize, w: usize, eight: bool) -> Vec<u32> {
    let mut out = vec![0u32; h * w];
    let mut next = 0;
    for start in 0..h * w {
        if !mask[start] || out[start] != 0 {
            continue;
        }
        next += 1;
        let mut stack = vec![start];
        out[start] = next;
        while let Some(p) = stack.pop() {
            let (r, c) = ((p / w) as i64, (p % w) as i64);
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if (dr == 0 && dc == 0) || (!eight && dr != 0 && dc != 0) {
                        continue;
                    }
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                        continue;
                    }
                    let q = nr as usize * w + nc as usize;
                    if mask[q] && out[q] == 0 {
                        out[q] = next;
                        stack.push(q);
                    }
                }
            }
        }
    }
    out
}

fn random_boxes(h: usize, w: usize, r: &mut mct_core::rng::Rng) -> InstanceSet {
    let mut labels = vec![0u32; h * w];
    for id in 1..=r.random_range(0..=6u32) {
        let (r0, c0) = (r.random_range(0..h), r.random_range(0..w));
        let (r1, c1) = ((r0 + r.random_range(2..12)).min(h), (c0 + r.random_range(2..12)).min(w));
        for row in r0..r1 {
            for col in c0..c1 {
                labels[row * w + col] = id;
            }
        }
    }
    InstanceSet::from_label_image(h, w, &labels).expect("labels")
}

fn optimal_matching(iou: &BTreeMap<(usize, usize), f64>, np: usize, nt: usize, tau: f64) -> usize {
    fn go(i: usize, np: usize, used: &mut [bool], ok: &dyn Fn(usize, usize) -> bool) -> usize {
        if i == np {
            return 0;
        }
        let mut best = go(i + 1, np, used, ok);
        for j in 0..used.len() {
            if !used[j] && ok(i, j) {
                used[j] = true;
                best = best.max(1 + go(i + 1, np, used, ok));
                used[j] = false;
            }
        }
        best
    }
    let ok = |i: usize, j: usize| iou.get(&(i, j)).is_some_and(|v| *v >= tau);
    go(0, np, &mut vec![false; nt], &ok)
}

fn instance_checks() -> Outcome {
    let mut r = rng(derive_named(SEED, "instances"));
    for trial in 0..100 {
        let density = r.random_range(0.2..0.7);
        let mask: Vec<bool> = (0..32 * 32).map(|_| r.random_bool(density)).collect();
        for (conn, eight) in [(Connectivity::Four, false), (Connectivity::Eight, true)] {
            let got = connected_components(&mask, 32, 32, conn).expect("components").label_image();
            if got != flood_fill(&mask, 32, 32, eight) {
                return Err(format!("mask {trial}: components differ from flood fill"));
            }
        }
    }
    let (h, w) = (80, 120);
    let centers = [(40.0, 40.0), (40.0, 80.0)];
    let mask: Vec<bool> = (0..h * w)
        .map(|p| {
            let (y, x) = ((p / w) as f64, (p % w) as f64);
            centers.iter().any(|(cy, cx)| (y - cy).powi(2) + (x - cx).powi(2) <= 25.0f64.powi(2))
        })
        .collect();
    let split = watershed_split(&mask, h, w, DEFAULT_MIN_SEED_DISTANCE).expect("watershed");
    let holds = |inst: &mct_core::instances::Instance, (cy, cx): (f64, f64)| inst.contains(cy as usize * w + cx as usize);
    let two = split.len() == 2
        && ((holds(&split.instances[0], centers[0]) && holds(&split.instances[1], centers[1]))
            || (holds(&split.instances[0], centers[1]) && holds(&split.instances[1], centers[0])));
    if !two {
        return Err(format!("overlapping discs split into {} instances", split.len()));
    }
    for trial in 0..200 {
        let truth = random_boxes(32, 32, &mut r);
        let pred = random_boxes(32, 32, &mut r);
        let tau = r.random_range(0.5..=1.0);
        let m = match_instances(&pred, &truth, tau).expect("match");
        let best = optimal_matching(&pairwise_iou(&pred, &truth).unwrap(), pred.len(), truth.len(), tau);
        if m.true_positives != best {
            return Err(format!("case {trial}: greedy {} vs optimal {best}", m.true_positives));
        }
    }
    Ok("100 masks match flood fill; two discs give 2 instances; 200 matchings optimal".into())
}

fn particle_patches(n: usize, seed: u64) -> Vec<Micrograph> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let size = r.random_range(32..72);
            let (ry, rx) = (r.random_range(6.0..15.0), r.random_range(6.0..15.0));
            let rough = r.random_range(0.0..0.4);
            let level = r.random_range(140.0..230.0);
            let c = size as f64 / 2.0;
            let mut px = vec![30u8; size * size];
            for y in 0..size {
                for x in 0..size {
                    let (dy, dx) = ((y as f64 - c) / ry, (x as f64 - c) / rx);
                    let wobble = 1.0 + rough * (5.0 * dy.atan2(dx)).sin();
                    if dy * dy + dx * dx <= wobble * wobble {
                        px[y * size + x] = (level - 20.0 * (dy * dy + dx * dx)).max(0.0) as u8;
                    }
                }
            }
            Micrograph::from_gray(format!("p{i}"), size, size, px).expect("patch")
        })
        .collect()
}

fn fingerprint_checks() -> Outcome {
    let b = backbone();
    let config = FingerprintConfig {
        seed: SEED,
        ..FingerprintConfig::default()
    };
    if config.k != 8 {
        return Err(format!("default k is {}", config.k));
    }
    let mut worst = 0.0f64;
    for powder in 0..3 {
        let patches = particle_patches(40, derive_seed(SEED, powder));
        let (fp, _) = build_fingerprint(&b, &patches, &config).expect("fingerprint");
        worst = worst
            .max((fp.histogram.iter().sum::<f64>() - 1.0).abs())
            .max((fp.density.iter().sum::<f64>() - 1.0).abs());
        if fingerprint_distance(&fp, &fp).expect("distance") != 0.0 {
            return Err("distance(a, a) is not zero".into());
        }
        let mut shuffled = patches.clone();
        let mut r = rng(derive_seed(SEED, 100 + powder));
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, r.random_range(0..=i));
        }
        let (again, _) = build_fingerprint(&b, &shuffled, &config).expect("fingerprint");
        if again.histogram != fp.histogram {
            return Err(format!("powder {powder}: permutation changed the histogram"));
        }
    }
    check(
        worst <= NORMALIZATION_TOL,
        format!("k = 8; normalization error {worst:.1e}; identity and permutation invariance hold"),
    )
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).expect("read dir") {
            let p = e.expect("entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).expect("read"));
            }
        }
    }
    out
}

fn run_suite(root: &Path) -> Result<(), String> {
    for args in cli_suite() {
        let out = Command::new(env!("CARGO_BIN_EXE_mct"))
            .args(&args)
            .current_dir(root)
            .env("MCT_CACHE", root.join("cache"))
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!(
                "`mct {}` failed: {}",
                args.join(" "),
                String::from_utf8_lossy(&out.stderr)
            ));
        }
    }
    Ok(())
}

/// Every subcommand, chained on small synthetic data.
fn cli_suite() -> Vec<Vec<String>> {
    let cmds: &[&str] = &[
        "synth --n 12 --size 64 --sweeps 10,40 --f 0,0.3 --seed 3 --out synth",
        "featurize --manifest synth/manifest.json --width-divisor 8 --out store",
        "search --store store --query poly_00000 --k 5 --out search.json",
        "cluster --store store --k 3 --seed 4 --out clusters",
        "embed --store store --perplexity 3 --epochs 200 --seed 5 --out embed",
        "train --store store --manifest synth/manifest.json --target d_px --truth synth/truth.csv --seed 6 --out ridge",
        "train --store store --manifest synth/manifest.json --seed 6 --out svm",
        "textures --n 3 --size 64 --seed 7 --out tex",
        "train-pixels --manifest tex/manifest.json --width-divisor 8 --per-class 200 --seed 8 --out pixels",
        "segment --model pixels --manifest tex/manifest.json --width-divisor 8 --out masks",
        "eval masks --pred masks --truth tex/masks --out eval_masks.json",
        "particles --n 1 --count 12 --seed 10 --out part",
        "instances --mask part/masks/part_00000.png --class particle --watershed --out inst/watershed.json",
        "instances --mask part/masks/part_00000.png --class particle --out inst/components.json",
        "eval instances --pred inst/watershed.json --truth inst/components.json --out eval_inst.json",
        "fingerprint --image part/part_00000.png --instances inst/components.json --width-divisor 8 --k 3 --pca-dim 4 --epochs 200 --seed 9 --out fp",
    ];
    cmds.iter().map(|c| c.split_whitespace().map(String::from).collect()).collect()
}

fn cli_reproducibility() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let work = dir.path().join("work");
    std::fs::create_dir_all(&work).map_err(|e| e.to_string())?;
    run_suite(&work)?;
    let first = snapshot(&work);
    std::fs::remove_dir_all(&work).map_err(|e| e.to_string())?;
    std::fs::create_dir_all(&work).map_err(|e| e.to_string())?;
    run_suite(&work)?;
    let second = snapshot(&work);
    let differing: Vec<String> = first
        .iter()
        .filter(|(p, bytes)| second.get(*p) != Some(bytes))
        .map(|(p, _)| p.display().to_string())
        .collect();
    check(
        differing.is_empty() && first.len() == second.len(),
        if differing.is_empty() {
            format!("{} commands, {} output files byte-identical across reruns", cli_suite().len(), first.len())
        } else {
            format!("outputs differ: {}", differing.join(", "))
        },
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("grain-size regression", grain_size_regression),
        ("texture classification", texture_classification),
        ("semantic segmentation", semantic_segmentation),
        ("visual search", visual_search),
        ("k-means", kmeans_checks),
        ("t-SNE", tsne_checks),
        ("PCA", pca_checks),
        ("instance pipeline", instance_checks),
        ("fingerprint", fingerprint_checks),
        ("CLI reproducibility", cli_reproducibility),
    ];
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let outcome = f();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {n:>2} {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {d} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
