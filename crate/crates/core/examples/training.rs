//! Training one shard model, checking its gradient and saving it.
//!
//! `cargo run --release --example training -- [sgc|meangnn]`

use guide::graph::{generate_sbm, inductive_split, DegreeRecord, SbmParams};
use guide::model::{grad_check, predict, read_model, train_shard_traced, write_model, Hyper, ModelKind, ModelParams};
use guide::partition::{gpfb_sr, GpfbConfig};
use guide::repair::{repair, RepairStrategy};

fn main() -> guide::Result<()> {
    let kind: ModelKind = std::env::args().nth(1).as_deref().unwrap_or("sgc").parse()?;
    let g = generate_sbm(&SbmParams {
        n: 240,
        blocks: 4,
        classes: 2,
        p_in: 0.1,
        p_out: 0.01,
        feature_dim: 8,
        homophily: 0.9,
        seed: 3,
    })?;
    let (train, test) = inductive_split(&g, 0.25, 3)?;
    let p = gpfb_sr(&train, 4, &GpfbConfig::default())?;
    let rs = repair(&p, &train, &DegreeRecord::from_graph(&train), 0, RepairStrategy::Mirror, 1.0, 0)?;

    let hyper = Hyper { hidden: 16, ..Hyper::default() };
    let init = ModelParams::init(kind, train.feature_dim(), train.num_classes(), hyper, 3)?;
    println!("{kind}: {} parameters, gradient check error {:.2e}", init.parameter_count(), grad_check(&init, &rs, 1e-6)?);

    let report = train_shard_traced(&rs, &init)?;
    for (e, loss) in report.losses.iter().enumerate().step_by(40) {
        println!("epoch {e:>3}  loss {loss:.5}");
    }
    let pred = predict(&report.params, &test)?;
    let hits = pred.classes().iter().zip(test.labels()).filter(|(a, b)| a == b).count();
    println!("shard 0 alone: {hits}/{} test nodes correct", test.node_count());

    let path = std::env::temp_dir().join("guide-example-model.txt");
    write_model(&report.params, &path)?;
    assert_eq!(read_model(&path)?, report.params);
    println!("saved and reloaded {}", path.display());
    Ok(())
}
