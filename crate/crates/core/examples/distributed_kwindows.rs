//! Each node clusters its own shard and sends only window summaries; the
//! server merges every overlapping pair.

use distml::channel::Channel;
use distml::clustering::{distributed_kwindows_via, kwindows, label_agreement, KWindowsConfig};
use distml::data::{generate_clusters, partition, ClusterShape, SplitMode, SplitSpec};

fn main() -> distml::Result<()> {
    let centers = vec![vec![0.0, 0.0], vec![10.0, 0.0]];
    let data = generate_clusters(&centers, 0.5, 300, ClusterShape::Gaussian, 9)?;
    let labels = data.classes().expect("generated labels").into_owned();
    let parts = partition(&data, &SplitSpec { mode: SplitMode::ShuffledIid, k: 3, seed: 9 })?;
    let config = KWindowsConfig::new(6, 1.0, 9);

    let central = kwindows(&data, &config)?;
    let mut channel = Channel::new();
    let distributed = distributed_kwindows_via(&parts, &config, &mut channel)?;

    println!(
        "centralized: {} windows, agreement {:.3}",
        central.windows.len(),
        label_agreement(&central.assignment, &labels)
    );
    println!(
        "distributed: {} windows, agreement {:.3}",
        distributed.windows.len(),
        label_agreement(&distributed.assignment, &labels)
    );
    for e in channel.messages() {
        println!("node {} sent {} summaries ({} reals)", e.from, e.message.len(), channel.reals_from(e.from));
    }
    Ok(())
}
