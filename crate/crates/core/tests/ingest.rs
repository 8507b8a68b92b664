use std::fmt::Write as _;

use dbreg::io::{ingest, parse_table, InputKind, Outcome};
use dbreg::Error;
use tempfile::TempDir;

fn expression_files(dir: &TempDir, x_rows: usize) -> (std::path::PathBuf, std::path::PathBuf) {
    let mut y = (1..=33).map(|g| format!("g{g}")).collect::<Vec<_>>().join("\t") + "\n";
    for i in 0..102 {
        let row: Vec<String> = (0..33).map(|g| format!("{}", 5.0 + ((i * 31 + g * 7) % 17) as f64 / 10.0)).collect();
        writeln!(y, "{}", row.join("\t")).unwrap();
    }
    let mut x = String::from("tumor\n");
    for i in 0..x_rows {
        writeln!(x, "{}", (i < 52) as u8).unwrap();
    }
    let (yp, xp) = (dir.path().join("y.tsv"), dir.path().join("x.csv"));
    std::fs::write(&yp, y).unwrap();
    std::fs::write(&xp, x).unwrap();
    (yp, xp)
}

#[test]
fn pathway_shaped_files() {
    let dir = TempDir::new().unwrap();
    let (yp, xp) = expression_files(&dir, 102);
    let (outcome, design) = ingest(&yp, &xp, InputKind::Responses).unwrap();
    let Outcome::Responses(y) = outcome else { panic!("expected responses") };
    assert_eq!((y.n(), y.k()), (102, 33));
    assert_eq!((design.n(), design.m()), (102, 1));
    assert_eq!(design.x().iter().filter(|v| **v == 1.0).count(), 52);
}

#[test]
fn row_count_mismatch() {
    let dir = TempDir::new().unwrap();
    let (yp, xp) = expression_files(&dir, 101);
    let err = ingest(&yp, &xp, InputKind::Responses).unwrap_err();
    assert!(matches!(err, Error::InvalidInput(ref m) if m.contains("dimension mismatch")), "{err}");
}

#[test]
fn small_similarity_file() {
    let dir = TempDir::new().unwrap();
    let s = "2,1,0,0,0\n1,2,1,0,0\n0,1,2,1,0\n0,0,1,2,1\n0,0,0,1,2\n";
    let x = "1\n2\n3\n5\n8\n";
    std::fs::write(dir.path().join("s.csv"), s).unwrap();
    std::fs::write(dir.path().join("x.csv"), x).unwrap();
    let (outcome, _) = ingest(&dir.path().join("s.csv"), &dir.path().join("x.csv"), InputKind::Similarity).unwrap();
    assert!(matches!(outcome, Outcome::Similarity(ref m) if m.n() == 5));

    std::fs::write(dir.path().join("bad.csv"), "2,1\n0,2\n").unwrap();
    std::fs::write(dir.path().join("x2.csv"), "1\n2\n").unwrap();
    assert!(ingest(&dir.path().join("bad.csv"), &dir.path().join("x2.csv"), InputKind::Similarity).is_err());
}

#[test]
fn bad_cells_are_located() {
    let err = parse_table("a\tb\n1\t2\n3\tNaN\n", "y.tsv").unwrap_err();
    assert!(err.to_string().contains("y.tsv: line 3, column 2"), "{err}");
    let err = parse_table("1,2\n3,four\n", "y.csv").unwrap_err();
    assert!(err.to_string().contains("line 2, column 2"), "{err}");
}
