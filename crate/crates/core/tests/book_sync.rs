//! The guide's code snippets must stay byte-identical with the crate's
//! doc-tests, so `cargo test` keeps book and code in sync.

use std::path::Path;

fn doc_snippets(path: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut out = Vec::new();
    let mut cur: Option<Vec<String>> = None;
    for line in text.lines() {
        let s = line.trim_start();
        if s == "//! ```" {
            match cur.take() {
                Some(block) => out.push(block.join("\n")),
                None => cur = Some(Vec::new()),
            }
            continue;
        }
        if let Some(block) = cur.as_mut() {
            if let Some(rest) = s.strip_prefix("//! ") {
                block.push(rest.to_string());
            } else if s == "//!" {
                block.push(String::new());
            }
        }
    }
    out
}

fn book_snippets(path: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut out = Vec::new();
    let mut cur: Option<Vec<String>> = None;
    for line in text.lines() {
        if line.trim() == "```rust" {
            cur = Some(Vec::new());
            continue;
        }
        if line.trim() == "```" {
            if let Some(block) = cur.take() {
                out.push(block.join("\n"));
            }
            continue;
        }
        if let Some(block) = cur.as_mut() {
            block.push(line.to_string());
        }
    }
    out
}

#[test]
fn book_snippets_match_doc_tests() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let pairs = [
        ("crates/core/src/cpmap.rs", "book/src/cp-maps.md"),
        ("crates/core/src/corr.rs", "book/src/correspondences.md"),
        ("crates/core/src/perm.rs", "book/src/permutations.md"),
        ("crates/core/src/systems.rs", "book/src/systems.md"),
        ("crates/core/src/dilate.rs", "book/src/dilations.md"),
        ("crates/core/src/gallery.rs", "book/src/gallery.md"),
    ];
    for (src, book) in pairs {
        let ds = doc_snippets(&root.join(src));
        let bs = book_snippets(&root.join(book));
        assert!(!bs.is_empty(), "{book} has no rust snippet");
        for b in &bs {
            assert!(
                ds.iter().any(|d| d.trim() == b.trim()),
                "snippet in {book} has no matching doc-test in {src}:\n{b}"
            );
        }
    }
}
