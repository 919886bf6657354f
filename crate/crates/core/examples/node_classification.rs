//! Trains the learnable-recurrence and optimal-basis classifiers on two
//! cliques joined by an edge.

use specfilt::experiments::two_clique_fixture;
use specfilt::graph::{normalized_adjacency, IsolatedNodes};
use specfilt::train::{train_node_classifier, ClassificationData, TrainConfig};

fn main() -> specfilt::Result<()> {
    let ds = two_clique_fixture();
    let p = normalized_adjacency(&ds.graph, IsolatedNodes::Reject)?;
    let data = ClassificationData {
        p: &p,
        features: ds.features.clone(),
        labels: ds.labels.clone(),
        n_classes: ds.n_classes,
    };
    let cfg = TrainConfig {
        max_epochs: 200,
        ..TrainConfig::classification()
    };
    for model in ["favard", "optbasis", "optbasis-scaled", "chebyshev"] {
        let r = train_node_classifier(model.parse()?, &data, &ds.splits[0], 10, None, &cfg)?;
        println!(
            "{model:>16}: best epoch {:>3}, val acc {:.2}, test acc {:.2}",
            r.best_epoch, r.val_accuracy, r.test_accuracy
        );
    }
    Ok(())
}
