//! Saving an ensemble, reloading it and continuing to unlearn.

use guide::engine::{append_audit, load_state, save_state, train_all, unlearn, AuditEntry, EngineConfig, UnlearnRequest};
use guide::graph::{generate_sbm, SbmParams};

fn main() -> guide::Result<()> {
    let g = generate_sbm(&SbmParams {
        n: 160,
        blocks: 4,
        classes: 2,
        p_in: 0.15,
        p_out: 0.01,
        feature_dim: 4,
        homophily: 0.9,
        seed: 6,
    })?;
    let config = EngineConfig { hyper: guide::model::Hyper { epochs: 50, ..Default::default() }, ..EngineConfig::default() };
    let state = train_all(&g, &config)?;

    let dir = std::env::temp_dir().join("guide-example-state");
    let _ = std::fs::remove_dir_all(&dir);
    save_state(&state, &dir)?;
    let reloaded = load_state(&dir)?;
    assert_eq!(reloaded, state);
    println!("saved revision {} to {}", state.revision, dir.display());

    let req = UnlearnRequest::Node(7);
    let (next, report) = unlearn(&reloaded, req)?;
    save_state(&next, &dir)?;
    append_audit(&dir, &AuditEntry {
        revision: report.revision,
        kind: req.kind().into(),
        ids: req.ids(),
        retrained: report.retrained.clone(),
        wall: report.elapsed,
    })?;
    print!("{}", std::fs::read_to_string(dir.join("audit.log"))?);
    for entry in std::fs::read_dir(&dir)? {
        println!("  {}", entry?.file_name().to_string_lossy());
    }
    Ok(())
}
