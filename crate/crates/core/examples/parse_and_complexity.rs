//! Parse a Python module, list its definitions and their complexity.

use repoalign::corpus::ProvenanceMeta;
use repoalign::syntax::{cyclomatic_complexity, extract_definitions, parse_source, Language};

const SOURCE: &str = r##"
import os

class Cache:
    def get(self, key):
        if key in self.items and not self.expired(key):
            return self.items[key]
        return None

    def expired(self, key):
        return False

def load(path):
    try:
        handle = open(path)
    except OSError:
        return None
    for line in handle:
        if line.startswith("#"):
            continue
    return handle
"##;

pub fn run_example() -> repoalign::Result<()> {
    let tree = parse_source(SOURCE, Language::Python)?;
    for def in tree.definitions() {
        println!(
            "{:<14} lines {:>2}-{:<2} complexity {}",
            def.qualified_name,
            def.node.span.start,
            def.node.span.end,
            cyclomatic_complexity(def.node)?
        );
    }
    let provenance = ProvenanceMeta {
        repo: "demo/cache".into(),
        commit_hash: "0".repeat(40),
    };
    for unit in extract_definitions(&tree, "cache.py", &provenance) {
        println!("{}  {}", unit.id, unit.signature);
    }
    Ok(())
}

fn main() -> repoalign::Result<()> {
    run_example()
}
