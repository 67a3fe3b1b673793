use std::fs;
use std::path::Path;

use irisadv::experiment::commands::{self, CommandError, EXIT_CALIBRATION, EXIT_IO};
use irisadv::experiment::{ExperimentConfig, Profile};

fn small(root: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::for_profile(Profile::Desk);
    c.data_dir = root.join("data");
    c.checkpoint = root.join("net.irsg");
    c.out_dir = root.join("out");
    c.identities = 10;
    c.epochs = Some(2);
    c.trials = 4;
    c.epsilons = vec![0.05, 0.02];
    c.caps = vec![5, 10, 20];
    c
}

/// File name and contents, with `dir`'s parent written as `ROOT`.
fn read_all(dir: &Path) -> Vec<(String, String)> {
    let root = dir.parent().unwrap().to_string_lossy().into_owned();
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            let text = fs::read_to_string(&p).unwrap().replace(&root, "ROOT");
            (p.file_name().unwrap().to_string_lossy().into_owned(), text)
        })
        .collect();
    files.sort();
    files
}

#[test]
fn config_text_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(dir.path());
    c.set("target", "3:R:1").unwrap();
    c.set("profile", "full").unwrap();
    c.set("subset_size", "77").unwrap();
    let back = ExperimentConfig::from_text(&c.to_text()).unwrap();
    assert_eq!(back, c);
}

#[test]
fn config_errors_map_to_io_exit_code() {
    let err = ExperimentConfig::from_text("trials = many").unwrap_err();
    assert_eq!(CommandError::from(err).exit_code(), EXIT_IO);
    let err = ExperimentConfig::from_text("epsilons = 0.01, 0.03").unwrap_err();
    assert_eq!(CommandError::from(err).exit_code(), EXIT_IO);
    assert!(ExperimentConfig::from_text("colour = blue").is_err());
}

#[test]
fn miscalibrated_corpus_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(dir.path());
    c.noise_level = 3.0;
    let err = commands::gen_data(&c).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_CALIBRATION);
    assert!(!c.manifest_path().exists());
}

#[test]
fn pipeline_reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for root in [a.path(), b.path()] {
        let c = small(root);
        commands::gen_data(&c).unwrap();
        commands::train(&c).unwrap();
        let report = commands::sweep(&c).unwrap();
        assert_eq!(report.outcomes.len(), 4 * 2 * 3 * 2);
    }
    for sub in ["data", "out"] {
        let (x, y) = (read_all(&a.path().join(sub)), read_all(&b.path().join(sub)));
        assert!(!x.is_empty());
        assert_eq!(x, y, "{sub} differs");
    }
    for sub in ["iris", "mask", "code"] {
        let bytes = |root: &Path| -> Vec<(std::path::PathBuf, Vec<u8>)> {
            let mut v: Vec<_> = fs::read_dir(root.join("data").join(sub))
                .unwrap()
                .map(|e| e.unwrap().path())
                .map(|p| (p.file_name().unwrap().into(), fs::read(&p).unwrap()))
                .collect();
            v.sort();
            v
        };
        let x = bytes(a.path());
        assert_eq!(x.len(), 100);
        assert!(x == bytes(b.path()), "data/{sub} differs");
    }
    assert_eq!(fs::read(a.path().join("net.irsg")).unwrap(), fs::read(b.path().join("net.irsg")).unwrap());
    // a rerun over the same directory rewrites the same bytes
    let c = small(a.path());
    let before = read_all(&c.out_dir);
    commands::sweep(&c).unwrap();
    assert_eq!(read_all(&c.out_dir), before);
}
