use std::path::{Path, PathBuf};
use std::time::Duration;

use scriptorium::core::{ClassSpace, Document, Vote};
use scriptorium::dataset::load_data_dir;
use scriptorium::lf::{apply_all, apply_lf, load_lf_set, ApplyOptions, LabelingFunction};
use scriptorium::runner::RunnerRegistry;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn options() -> ApplyOptions {
    ApplyOptions { runners: RunnerRegistry::new(), timeout: Duration::from_secs(5) }
}

fn setup() -> (Vec<LabelingFunction>, Vec<Document>, ClassSpace) {
    let dataset = load_data_dir(&fixtures().join("minispam")).unwrap();
    let lfs = load_lf_set(&fixtures().join("human_lfs.json"), dataset.classes.k()).unwrap();
    let docs = dataset.split("test").unwrap()[..10].to_vec();
    (lfs, docs, dataset.classes.clone())
}

#[test]
fn matrix_equals_independent_cell_calls() {
    let (lfs, docs, classes) = setup();
    assert_eq!(lfs.len(), 3);
    let applied = apply_all(&lfs, &docs, &classes, &options()).unwrap();
    assert_eq!((applied.matrix.n(), applied.matrix.m()), (10, 3));
    for (i, doc) in docs.iter().enumerate() {
        for (a, lf) in lfs.iter().enumerate() {
            let (vote, tally): (Vote, _) = apply_lf(lf, doc, &classes, &options()).unwrap();
            assert_eq!(tally.total(), 0);
            assert_eq!(applied.matrix.get(i, a), vote.raw(), "doc {i} LF {a}");
        }
    }
    assert!(applied.errors.iter().all(|t| t.total() == 0));
}

#[test]
fn empty_split_gives_zero_rows() {
    let (lfs, _, classes) = setup();
    let applied = apply_all(&lfs, &[], &classes, &options()).unwrap();
    assert_eq!((applied.matrix.n(), applied.matrix.m()), (0, 3));
}

#[test]
fn permuting_lfs_permutes_columns() {
    let (lfs, docs, classes) = setup();
    let base = apply_all(&lfs, &docs, &classes, &options()).unwrap().matrix;
    let order = [2, 0, 1];
    let permuted: Vec<LabelingFunction> = order.iter().map(|&a| lfs[a].clone()).collect();
    let shuffled = apply_all(&permuted, &docs, &classes, &options()).unwrap().matrix;
    assert_eq!(shuffled, base.select_columns(&order));
}

#[test]
fn parallel_and_sequential_agree() {
    let dataset = load_data_dir(&fixtures().join("minispam")).unwrap();
    let lfs = load_lf_set(&fixtures().join("human_lfs.json"), 2).unwrap();
    let docs = dataset.split("train").unwrap();
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let many = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
    let a = single.install(|| apply_all(&lfs, docs, &dataset.classes, &options()).unwrap());
    let b = many.install(|| apply_all(&lfs, docs, &dataset.classes, &options()).unwrap());
    assert_eq!(a, b);
}

#[test]
fn fixture_human_set_covers_about_forty_percent() {
    let dataset = load_data_dir(&fixtures().join("minispam")).unwrap();
    let lfs = load_lf_set(&fixtures().join("human_lfs.json"), 2).unwrap();
    let train = dataset.split("train").unwrap();
    let matrix = apply_all(&lfs, train, &dataset.classes, &options()).unwrap().matrix;
    let covered = (0..matrix.n()).filter(|&i| matrix.is_covered(i)).count();
    assert_eq!((covered, train.len()), (49, 120));
}

#[test]
fn loading_twice_is_identical() {
    let a = load_data_dir(&fixtures().join("minispam")).unwrap();
    let b = load_data_dir(&fixtures().join("minispam")).unwrap();
    assert_eq!(a, b);
    let balance = a.class_balance("test").unwrap();
    assert!((balance.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}
