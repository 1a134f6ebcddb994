use std::fs;
use std::path::Path;

use recsteal::io::{load_interactions, write_interactions, Format, LoadOptions};
use recsteal::AppError;

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn duplicate_rows_collapse_and_reindex() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "a.csv", "u9,i7\nu9,i7\nu2,i7\n");
    let ds = load_interactions(&p, &LoadOptions::default()).unwrap();
    assert_eq!(ds.num_users(), 2);
    assert_eq!(ds.num_items(), 1);
    assert_eq!(
        ds.items_of(0).unwrap().iter().copied().collect::<Vec<_>>(),
        vec![0]
    );
    assert_eq!(
        ds.items_of(1).unwrap().iter().copied().collect::<Vec<_>>(),
        vec![0]
    );
    assert_eq!(ds.user_ids().raw(0), Some("u9"));
    assert_eq!(ds.user_ids().raw(1), Some("u2"));
}

#[test]
fn header_detected_and_extra_columns_ignored() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "r.csv",
        "userId,movieId,rating,timestamp\n1,10,4.0,100\n1,11,3.0,101\n2,10,5.0,102\n",
    );
    let ds = load_interactions(&p, &LoadOptions::default()).unwrap();
    assert_eq!(ds.num_users(), 2);
    assert_eq!(ds.num_items(), 2);
    assert_eq!(ds.num_interactions(), 3);
}

#[test]
fn forced_header_flag() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "n.csv", "a,b\n1,2\n");
    let opts = LoadOptions {
        header: Some(true),
        ..Default::default()
    };
    assert_eq!(load_interactions(&p, &opts).unwrap().num_interactions(), 1);
    let opts = LoadOptions {
        header: Some(false),
        ..Default::default()
    };
    assert_eq!(load_interactions(&p, &opts).unwrap().num_interactions(), 2);
}

#[test]
fn tsv_and_dat_formats() {
    let dir = tempfile::tempdir().unwrap();
    let tsv = write(
        dir.path(),
        "u.data",
        "196\t242\t3\t881250949\n186\t302\t3\t891717742\n",
    );
    let ds = load_interactions(&tsv, &LoadOptions::default()).unwrap();
    assert_eq!((ds.num_users(), ds.num_items()), (2, 2));
    let dat = write(
        dir.path(),
        "ratings.dat",
        "1::1193::5::978300760\n1::661::3::978302109\n",
    );
    let ds = load_interactions(&dat, &LoadOptions::default()).unwrap();
    assert_eq!((ds.num_users(), ds.num_items()), (1, 2));
    let semi = write(dir.path(), "x.txt", "a;b\nc;b\n");
    let opts = LoadOptions {
        format: Some(Format::Csv),
        delimiter: Some(";".into()),
        header: None,
    };
    assert_eq!(load_interactions(&semi, &opts).unwrap().num_users(), 2);
}

#[test]
fn empty_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "e.csv", "");
    let err = load_interactions(&p, &LoadOptions::default()).unwrap_err();
    assert!(
        matches!(err, AppError::Core(recsteal_core::Error::NoInteractions)),
        "{err}"
    );
}

#[test]
fn malformed_row_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "m.csv", "1,2\n\n3\n");
    match load_interactions(&p, &LoadOptions::default()).unwrap_err() {
        AppError::Parse { line, .. } => assert_eq!(line, 3),
        e => panic!("unexpected {e}"),
    }
    let p = write(dir.path(), "m.dat", "1::2\n::5\n");
    match load_interactions(&p, &LoadOptions::default()).unwrap_err() {
        AppError::Parse { line, .. } => assert_eq!(line, 2),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn missing_file_names_the_path() {
    let err =
        load_interactions(Path::new("/nonexistent/x.csv"), &LoadOptions::default()).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/x.csv"));
}

#[test]
fn write_then_read_preserves_interactions() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "in.csv", "a,x\na,y\nb,y\nc,z\n");
    let ds = load_interactions(&p, &LoadOptions::default()).unwrap();
    let out = dir.path().join("out.csv");
    write_interactions(&out, &ds).unwrap();
    let back = load_interactions(&out, &LoadOptions::default()).unwrap();
    assert_eq!(back, ds);
}
