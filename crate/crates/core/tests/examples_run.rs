//! Every example must run to completion.

#[allow(dead_code)]
#[path = "../examples/parse_and_complexity.rs"]
mod parse_and_complexity;

#[test]
fn parse_and_complexity_runs() {
    parse_and_complexity::run_example().unwrap();
}

#[allow(dead_code)]
#[path = "../examples/curate_pull_requests.rs"]
mod curate_pull_requests;

#[test]
fn curate_pull_requests_runs() {
    curate_pull_requests::run_example().unwrap();
}

#[allow(dead_code)]
#[path = "../examples/dependency_screening.rs"]
mod dependency_screening;

#[test]
fn dependency_screening_runs() {
    dependency_screening::run_example().unwrap();
}

#[allow(dead_code)]
#[path = "../examples/corpus_stats.rs"]
mod corpus_stats;

#[test]
fn corpus_stats_runs() {
    corpus_stats::run_example().unwrap();
}

#[allow(dead_code)]
#[path = "../examples/train_dual_encoder.rs"]
mod train_dual_encoder;

#[test]
fn train_dual_encoder_runs() {
    train_dual_encoder::run_example().unwrap();
}

#[allow(dead_code)]
#[path = "../examples/search_repository.rs"]
mod search_repository;

#[test]
fn search_repository_runs() {
    search_repository::run_example().unwrap();
}

#[allow(dead_code)]
#[path = "../examples/adversarial_search.rs"]
mod adversarial_search;

#[test]
fn adversarial_search_runs() {
    adversarial_search::run_example().unwrap();
}

#[allow(dead_code)]
#[path = "../examples/evaluate_metrics.rs"]
mod evaluate_metrics;

#[test]
fn evaluate_metrics_runs() {
    evaluate_metrics::run_example().unwrap();
}

#[allow(dead_code)]
#[path = "../examples/ablation_study.rs"]
mod ablation_study;

#[test]
fn ablation_study_runs() {
    ablation_study::run_example().unwrap();
}
