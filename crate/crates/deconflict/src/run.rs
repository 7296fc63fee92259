//! Training and evaluation drivers behind the CLI.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use deconflict_core::episode::EpisodeOptions;
use deconflict_core::metrics::{aggregate, EpisodeMetrics};
use deconflict_core::nn::{NetDims, PolicyNetwork};
use deconflict_core::ppo::{train_episode, FleetLearner, TrainConfig, TrainStats};
use deconflict_core::scenario::{FleetId, Profile, ScenarioSpec};
use deconflict_core::seed::{derive_seed, stream};
use deconflict_core::{run_episode, EpisodeOutcome, EpisodeSeeds, FleetPolicy};
use rayon::prelude::*;

use crate::checkpoint::Checkpoint;
use crate::config::load_scenario_file;
use crate::report::{ReportFile, TrainLogRow, TrajectoryRow};

pub const TRAIN_LOG: &str = "train_log.csv";
pub const TRAJECTORIES: &str = "trajectories.csv";

pub fn checkpoint_file(fleet: FleetId) -> String {
    format!("checkpoint_{}.bin", fleet.to_string().to_lowercase())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Ppoa2c,
    RuleBased,
    Random,
}

impl PolicyKind {
    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::Ppoa2c => "PPOA2C",
            PolicyKind::RuleBased => "Rule-based",
            PolicyKind::Random => "Random",
        }
    }
}

/// `<policy>:<config>`, e.g. `ppoa2c:X` or `rulebased:Y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FleetSpec {
    pub policy: PolicyKind,
    pub profile: Profile,
}

impl FromStr for FleetSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (p, c) = s
            .split_once(':')
            .ok_or_else(|| format!("expected <policy>:<config>, got `{s}`"))?;
        let policy = match p.to_ascii_lowercase().as_str() {
            "ppoa2c" => PolicyKind::Ppoa2c,
            "rulebased" | "rule-based" | "rule" => PolicyKind::RuleBased,
            "random" => PolicyKind::Random,
            other => return Err(format!("unknown policy `{other}`")),
        };
        let profile = Profile::parse(c).ok_or_else(|| format!("unknown config `{c}`"))?;
        Ok(Self { policy, profile })
    }
}

impl std::fmt::Display for FleetSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}({})", self.policy.label(), self.profile.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    /// Scenario file; the built-in reference scenario when absent.
    pub scenario: Option<PathBuf>,
    pub fleets: [FleetSpec; 2],
    pub episodes: u64,
    pub seed: u64,
    pub out: PathBuf,
    pub checkpoints: [Option<PathBuf>; 2],
    pub trajectories: bool,
    /// Argmax actions for learned fleets during evaluation.
    pub greedy: bool,
    pub train: TrainConfig,
}

impl RunSpec {
    pub fn new(fleet_a: FleetSpec, fleet_b: FleetSpec, out: impl Into<PathBuf>) -> Self {
        Self {
            scenario: None,
            fleets: [fleet_a, fleet_b],
            episodes: 1,
            seed: 1,
            out: out.into(),
            checkpoints: [None, None],
            trajectories: false,
            greedy: true,
            train: TrainConfig::default(),
        }
    }

    pub fn model_label(&self) -> String {
        format!("{}+{}", self.fleets[0], self.fleets[1])
    }

    /// Scenario with each fleet's capability profile applied.
    pub fn load_scenario(&self) -> Result<ScenarioSpec> {
        let base = match &self.scenario {
            Some(p) => load_scenario_file(p)
                .with_context(|| format!("loading scenario {}", p.display()))?,
            None => ScenarioSpec::reference(),
        };
        let spec = FleetId::ALL.iter().fold(base, |s, f| {
            s.with_profile(*f, self.fleets[f.index()].profile)
        });
        spec.validate()?;
        Ok(spec)
    }

    fn learned(&self) -> impl Iterator<Item = FleetId> + '_ {
        FleetId::ALL
            .into_iter()
            .filter(|f| self.fleets[f.index()].policy == PolicyKind::Ppoa2c)
    }
}

/// One run per distinct seed, in order. A single seed keeps `spec.out`; a
/// sweep writes each seed to `<out>/seed-<n>`.
pub fn seed_sweep(spec: &RunSpec, seeds: &[u64]) -> Vec<RunSpec> {
    let mut distinct: Vec<u64> = Vec::new();
    for s in seeds {
        if !distinct.contains(s) {
            distinct.push(*s);
        }
    }
    if distinct.is_empty() {
        return vec![spec.clone()];
    }
    let sweep = distinct.len() > 1;
    distinct
        .into_iter()
        .map(|seed| {
            let mut s = spec.clone();
            s.seed = seed;
            if sweep {
                s.out = spec.out.join(format!("seed-{seed}"));
            }
            s
        })
        .collect()
}

fn fixed_policy(kind: PolicyKind) -> FleetPolicy<'static> {
    match kind {
        PolicyKind::RuleBased => FleetPolicy::RuleBased,
        PolicyKind::Random => FleetPolicy::Random,
        PolicyKind::Ppoa2c => unreachable!("learned fleets carry a network"),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn trajectory_writer(spec: &RunSpec) -> Result<Option<csv::Writer<BufWriter<File>>>> {
    if !spec.trajectories {
        return Ok(None);
    }
    Ok(Some(csv::Writer::from_writer(create(
        &spec.out.join(TRAJECTORIES),
    )?)))
}

fn write_trajectory(
    w: &mut Option<csv::Writer<BufWriter<File>>>,
    episode: u64,
    out: &EpisodeOutcome,
) -> Result<()> {
    if let Some(w) = w {
        for r in &out.trajectory {
            w.serialize(TrajectoryRow::new(episode, r))?;
        }
    }
    Ok(())
}

/// What a training run produced.
#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub log: PathBuf,
    pub checkpoints: Vec<PathBuf>,
}

/// Train every PPOA2C fleet for `spec.episodes` episodes. Fixed fleets are
/// never updated and never checkpointed.
pub fn cmd_train(spec: &RunSpec) -> Result<TrainSummary> {
    let scenario = spec.load_scenario()?;
    spec.train
        .validate()
        .map_err(|e| anyhow::anyhow!("invalid training config: {e}"))?;
    ensure!(
        spec.learned().next().is_some(),
        "training needs at least one ppoa2c fleet"
    );
    std::fs::create_dir_all(&spec.out)
        .with_context(|| format!("creating {}", spec.out.display()))?;

    let mut learners: [Option<FleetLearner>; 2] = [None, None];
    for f in spec.learned() {
        let i = f.index() as u64;
        let shuffle = derive_seed(spec.seed, stream::SHUFFLE, i);
        learners[f.index()] = Some(match &spec.checkpoints[f.index()] {
            Some(path) => {
                let net = load_network(path, f)?;
                FleetLearner::from_network(f, net, shuffle, &spec.train)
            }
            None => FleetLearner::new(
                f,
                NetDims::DEFAULT,
                derive_seed(spec.seed, stream::INIT, i),
                shuffle,
                &spec.train,
            ),
        });
    }

    let log_path = spec.out.join(TRAIN_LOG);
    let mut log = csv::Writer::from_writer(create(&log_path)?);
    let mut traj = trajectory_writer(spec)?;
    let opts = EpisodeOptions {
        collect_transitions: true,
        record_trajectory: spec.trajectories,
    };

    for episode in 0..spec.episodes {
        let outcome = {
            let policies: [FleetPolicy<'_>; 2] = std::array::from_fn(|i| match &learners[i] {
                Some(l) => FleetPolicy::Learned {
                    net: &l.net,
                    greedy: false,
                },
                None => fixed_policy(spec.fleets[i].policy),
            });
            run_episode(
                &scenario,
                policies,
                EpisodeSeeds::derive(spec.seed, episode),
                opts,
            )?
        };
        write_trajectory(&mut traj, episode, &outcome)?;
        let EpisodeOutcome {
            metrics,
            mut buffers,
            ..
        } = outcome;
        let stats = train_episode(&mut learners, &mut buffers, &spec.train)?;
        let row = log_row(spec, &scenario, episode, &metrics, &stats);
        log::info!(
            "episode {episode}: reward {:.3} success {} nmac {}",
            row.total_reward,
            row.n_success,
            row.nmac_total
        );
        log.serialize(row)?;
    }
    log.flush()?;
    if let Some(w) = &mut traj {
        w.flush()?;
    }

    let mut checkpoints = Vec::new();
    for (i, l) in learners.iter().enumerate() {
        if let Some(l) = l {
            let path = spec.out.join(checkpoint_file(FleetId::ALL[i]));
            Checkpoint::from_network(&l.net, l.fleet, spec.seed, spec.episodes).save(&path)?;
            checkpoints.push(path);
        }
    }
    Ok(TrainSummary {
        log: log_path,
        checkpoints,
    })
}

fn log_row(
    spec: &RunSpec,
    scenario: &ScenarioSpec,
    episode: u64,
    m: &EpisodeMetrics,
    stats: &[Option<TrainStats>; 2],
) -> TrainLogRow {
    let per_fleet = |f: FleetId| {
        let i = f.index();
        let agents = scenario
            .agent_assignments()
            .iter()
            .filter(|(_, owner)| *owner == f)
            .count()
            .max(1);
        let s = stats[i];
        (
            spec.fleets[i].to_string(),
            m.reward_by_fleet[i] / agents as f64,
            s.map(|s| s.policy_loss),
            s.map(|s| s.value_loss),
            s.map(|s| s.entropy),
            m.nmac_agents_by_fleet[i],
            m.success_by_fleet[i],
        )
    };
    let a = per_fleet(FleetId::A);
    let b = per_fleet(FleetId::B);
    TrainLogRow {
        episode,
        total_reward: m.total_reward(),
        n_success: m.n_success,
        nmac_total: m.total_nmac(),
        steps: m.steps,
        a_policy: a.0,
        a_mean_reward: a.1,
        a_policy_loss: a.2,
        a_value_loss: a.3,
        a_entropy: a.4,
        a_nmac: a.5,
        a_success: a.6,
        b_policy: b.0,
        b_mean_reward: b.1,
        b_policy_loss: b.2,
        b_value_loss: b.3,
        b_entropy: b.4,
        b_nmac: b.5,
        b_success: b.6,
    }
}

pub fn load_network(path: &Path, fleet: FleetId) -> Result<PolicyNetwork<f32>> {
    let ck = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    if ck.fleet != fleet {
        bail!(crate::checkpoint::CheckpointError::WrongFleet {
            expected: fleet,
            found: ck.fleet,
        });
    }
    ck.to_network()
        .with_context(|| format!("loading {}", path.display()))
}

/// Evaluation result plus where it was written.
#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub report: ReportFile,
    pub episodes: Vec<EpisodeMetrics>,
}

/// Run `spec.episodes` evaluation episodes without updates and write the
/// report. Episodes run in parallel and are reduced in index order.
pub fn cmd_evaluate(spec: &RunSpec) -> Result<EvalSummary> {
    let scenario = spec.load_scenario()?;
    ensure!(spec.episodes > 0, "evaluation needs at least one episode");
    let mut nets: [Option<PolicyNetwork<f32>>; 2] = [None, None];
    for f in spec.learned() {
        let path = spec.checkpoints[f.index()].as_ref().with_context(|| {
            format!(
                "fleet {f} is ppoa2c and needs --checkpoint-{}",
                f.to_string().to_lowercase()
            )
        })?;
        nets[f.index()] = Some(load_network(path, f)?);
    }
    std::fs::create_dir_all(&spec.out)
        .with_context(|| format!("creating {}", spec.out.display()))?;

    let policies: [FleetPolicy<'_>; 2] = std::array::from_fn(|i| match &nets[i] {
        Some(net) => FleetPolicy::Learned {
            net,
            greedy: spec.greedy,
        },
        None => fixed_policy(spec.fleets[i].policy),
    });
    let opts = EpisodeOptions {
        collect_transitions: false,
        record_trajectory: spec.trajectories,
    };
    let outcomes: Vec<EpisodeOutcome> = (0..spec.episodes)
        .into_par_iter()
        .map(|e| {
            run_episode(
                &scenario,
                policies,
                EpisodeSeeds::derive(spec.seed, e),
                opts,
            )
        })
        .collect::<Result<_, _>>()?;

    let mut traj = trajectory_writer(spec)?;
    for (e, o) in outcomes.iter().enumerate() {
        write_trajectory(&mut traj, e as u64, o)?;
    }
    if let Some(w) = &mut traj {
        w.flush()?;
    }
    let episodes: Vec<EpisodeMetrics> = outcomes.into_iter().map(|o| o.metrics).collect();
    let report = ReportFile::new(
        &spec.model_label(),
        spec.seed,
        spec.greedy,
        &aggregate(&episodes)?,
    );
    report.write(&spec.out)?;
    Ok(EvalSummary { report, episodes })
}
