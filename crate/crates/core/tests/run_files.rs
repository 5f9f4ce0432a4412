use std::path::Path;

use ehris_core::harness::config::ExperimentConfig;
use ehris_core::harness::record::{
    export_plots, find_runs, sweep, train_and_record, CHECKPOINT_FILE, CONFIG_FILE, EPISODES_FILE, EVAL_FILE, RUN_FILE,
    STEPS_FILE,
};
use ehris_core::{AgentConfig, AgentKind, EhProtocol, EnvConfig};

fn tiny(dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.name = "tiny".into();
    cfg.output_dir = dir.to_path_buf();
    cfg.env = EnvConfig { antennas: 2, elements: 4, nodes: 2, slots: 8, ..EnvConfig::default() };
    cfg.agent = AgentConfig { hidden: vec![8], batch_size: 8, warmup_steps: 8, ..AgentConfig::preset(AgentKind::DdpgEh) };
    cfg.train.episodes = 2;
    cfg.train.eval_episodes = 1;
    cfg
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap_or_default().to_string()
}

#[test]
fn csv_headers_match_golden() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    train_and_record(&tiny(tmp.path()), 0, &dir).unwrap();
    let slot = "episode,step,incident_rf_energy,eh_input_energy,harvested_rf_energy,harvested_solar_energy,\
consumed_energy,overflow,causality_violated,battery_level,efficiency,reward,qos_violations,min_rate,rates";
    assert_eq!(header(&dir.join(STEPS_FILE)), slot);
    assert_eq!(header(&dir.join(EVAL_FILE)), slot);
    assert_eq!(
        header(&dir.join(EPISODES_FILE)),
        "episode,steps,reward,mean_efficiency,qos_violations,causality_violations,overflow,final_battery"
    );
    let out = tmp.path().join("plots.csv");
    export_plots(tmp.path(), &out).unwrap();
    assert_eq!(header(&out), "run,seed,protocol,agent,metric,x,value");
}

#[test]
fn one_episode_writes_one_row_per_slot() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(tmp.path());
    cfg.train.episodes = 1;
    let dir = tmp.path().join("run");
    train_and_record(&cfg, 3, &dir).unwrap();
    let rows = std::fs::read_to_string(dir.join(STEPS_FILE)).unwrap().lines().count() - 1;
    assert_eq!(rows, cfg.env.slots);
    for f in [CONFIG_FILE, RUN_FILE, CHECKPOINT_FILE] {
        assert!(dir.join(f).is_file(), "{f} missing");
    }
    // The stored snapshot is complete and names the single seed it ran.
    let snap = ExperimentConfig::load(&dir.join(CONFIG_FILE)).unwrap();
    assert_eq!(snap.train.seeds, vec![3]);
    assert_eq!(snap.env, cfg.env);
}

#[test]
fn protocol_sweep_gives_nine_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(tmp.path());
    cfg.train.episodes = 1;
    cfg.train.seeds = vec![0, 1, 2];
    let values: Vec<String> = EhProtocol::ALL.iter().map(|p| p.label().to_string()).collect();
    let runs = sweep(&cfg, "env.protocol", &values).unwrap();
    assert_eq!(runs.len(), 9);
    assert_eq!(find_runs(tmp.path()).unwrap().len(), 9);
    for p in EhProtocol::ALL {
        let dir = tmp.path().join("tiny").join(format!("env.protocol={}", p.label()));
        let snap = ExperimentConfig::load(&dir.join("seed-2").join(CONFIG_FILE)).unwrap();
        assert_eq!(snap.env.protocol, p);
    }
}
