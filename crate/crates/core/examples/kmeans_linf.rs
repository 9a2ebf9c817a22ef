//! k-means under the squared Euclidean and the ℓ∞ costs on the same data.

use distml::clustering::{kmeans_best_of, label_agreement, KMeansConfig, Norm};
use distml::data::{generate_clusters, ClusterShape};

fn main() -> distml::Result<()> {
    let centers = vec![vec![0.0, 0.0], vec![6.0, 0.0], vec![3.0, 5.0]];
    let data = generate_clusters(&centers, 0.8, 150, ClusterShape::UniformBox, 2)?;
    let labels = data.classes().expect("generated labels").into_owned();

    for norm in [Norm::L2, Norm::Linf] {
        let config = KMeansConfig::new(3, norm, 0);
        let model = kmeans_best_of(&data, &config, 0..10)?;
        let assignment: Vec<Option<usize>> = model.assignment.iter().map(|&a| Some(a)).collect();
        println!(
            "{norm:?}: objective {:.3} after {} iterations, agreement {:.3}",
            model.objective,
            model.iterations,
            label_agreement(&assignment, &labels)
        );
        for c in &model.centroids {
            println!("    centroid ({:.3}, {:.3})", c[0], c[1]);
        }
    }
    Ok(())
}
