//! Build dependency graphs for two snapshots of a small repository and
//! screen the change for API propagation and restructuring.

use std::collections::BTreeMap;

use repoalign::curation::{diff_snapshots, PullRequest, RepoSnapshot};
use repoalign::depgraph::{build_graph, detect_api_propagation, detect_restructuring, graph_delta};

fn snapshot(commit: char, files: &[(&str, &str)]) -> RepoSnapshot {
    RepoSnapshot {
        repo: "demo/shop".into(),
        commit_hash: commit.to_string().repeat(40),
        files: files.iter().map(|(p, t)| (p.to_string(), t.to_string())).collect::<BTreeMap<_, _>>(),
    }
}

pub fn run_example() -> repoalign::Result<()> {
    let before = snapshot(
        'a',
        &[
            ("shop/price.py", "def total(items):\n    return sum(items)\n"),
            ("shop/cart.py", "from shop.price import total\n\ndef checkout(cart):\n    return total(cart)\n"),
            ("shop/report.py", "from shop.price import total\n\ndef summary(rows):\n    return total(rows)\n"),
        ],
    );
    let after = snapshot(
        'b',
        &[
            ("shop/price.py", "def total(items, tax):\n    return sum(items) * tax\n"),
            ("shop/cart.py", "from shop.price import total\n\ndef checkout(cart):\n    return total(cart, 1.2)\n"),
            ("shop/report.py", "from shop.price import total\n\ndef summary(rows):\n    return total(rows, 1.0)\n"),
        ],
    );
    let g_before = build_graph(&before);
    let g_after = build_graph(&after);
    print!("{}", g_before.edge_list());

    let pr = PullRequest {
        id: 1,
        title: "Add tax to totals".into(),
        body: "Fixes #9".into(),
        commit_messages: Vec::new(),
        diff: diff_snapshots(&before, &after),
        before,
        after,
        created_at: Default::default(),
        license: None,
    };
    let api = detect_api_propagation(&pr, &g_before)?;
    println!("api propagation: {} {:?}", api.detected, api.changed_apis);
    let restructuring = detect_restructuring(&graph_delta(&g_before, &g_after));
    println!("restructuring: {}", restructuring.detected);
    Ok(())
}

fn main() -> repoalign::Result<()> {
    run_example()
}
