//! The three k-windows phases on two Gaussian clusters, seeded with more
//! windows than clusters.

use distml::clustering::{
    kwindows_enlarge, kwindows_merge, kwindows_phase1, label_agreement, seed_centers, KWindowsConfig,
};
use distml::data::{generate_clusters, ClusterShape};

fn main() -> distml::Result<()> {
    let centers = vec![vec![0.0, 0.0], vec![10.0, 0.0]];
    let data = generate_clusters(&centers, 0.5, 200, ClusterShape::Gaussian, 4)?;
    let labels = data.classes().expect("generated labels").into_owned();

    let config = KWindowsConfig::new(6, 1.0, 4);
    let init = seed_centers(&data, config.k_init, config.seed)?;
    let moved = kwindows_phase1(&data, &config, &init)?;
    let enlarged = kwindows_enlarge(&moved, &data, &config)?;
    let merged = kwindows_merge(&enlarged, &data, &config)?;

    for (name, model) in [("phase 1", &moved), ("enlarge", &enlarged), ("merge", &merged)] {
        let cards: Vec<usize> = model.windows.iter().map(|w| w.cardinality).collect();
        println!("{name:>8}: {} windows, cardinalities {cards:?}", model.windows.len());
    }
    for w in &merged.windows {
        let widths: Vec<String> = (0..w.center.len()).map(|d| format!("{:.2}", w.half_width(d))).collect();
        println!("  center ({:.2}, {:.2}) half-widths [{}]", w.center[0], w.center[1], widths.join(", "));
    }
    println!(
        "unassigned {}, agreement {:.3}",
        merged.unassigned(),
        label_agreement(&merged.assignment, &labels)
    );
    Ok(())
}
