use std::path::Path;
use std::str::FromStr;

use dynograph_core::simulate::{
    observe, simulate, write_observations_csv, write_trajectories_csv, ObservationRecord, SimConfig, SimError,
    TrajectoryBundle,
};
use dynograph_core::SystemSpec;

use crate::error::{CliError, CliResult};

/// Default observation seed offset; observation noise must not reuse the
/// simulation streams.
const OBSERVATION_SEED_KEY: u64 = 0x6f62_7365_7276_6521;

pub fn default_observation_seed(master_seed: u64) -> u64 {
    master_seed ^ OBSERVATION_SEED_KEY
}

/// One `--observe channel:t1,t2,...:sd:eta` flag; `eta` may be `none`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObserveSpec {
    pub channel: String,
    pub times: Vec<f64>,
    pub error_sd: f64,
    pub detection_limit: Option<f64>,
}

impl FromStr for ObserveSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [channel, times, sd, eta] = parts[..] else {
            return Err(format!("expected channel:times:sd:eta, got `{s}`"));
        };
        let number = |v: &str, what: &str| {
            v.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| format!("bad {what} `{v}`"))
        };
        if channel.is_empty() {
            return Err("empty channel name".into());
        }
        let times = times.split(',').map(|t| number(t, "time")).collect::<Result<Vec<_>, _>>()?;
        let error_sd = number(sd, "error sd")?;
        if error_sd < 0.0 {
            return Err(format!("error sd must be >= 0, got {error_sd}"));
        }
        let detection_limit = match eta.trim() {
            "none" => None,
            v => Some(number(v, "detection limit")?),
        };
        Ok(ObserveSpec { channel: channel.to_string(), times, error_sd, detection_limit })
    }
}

pub struct SimulateArgs<'a> {
    pub config: SimConfig,
    pub observe: &'a [ObserveSpec],
    pub observation_seed: u64,
    pub threads: Option<usize>,
}

pub struct SimulateOutput {
    pub bundle: TrajectoryBundle,
    pub observations: Option<Vec<Vec<ObservationRecord>>>,
}

fn classify(e: SimError) -> CliError {
    match e {
        SimError::InvalidConfig(_)
        | SimError::UnknownChannel(_)
        | SimError::TimeOutOfRange { .. }
        | SimError::Precondition(_) => CliError::usage(e.to_string()),
        SimError::InvalidSpec(_) => CliError::validation(e.to_string()),
        _ => CliError::runtime(format!("simulation failed: {e}")),
    }
}

pub fn run(spec: &SystemSpec, args: &SimulateArgs<'_>) -> CliResult<SimulateOutput> {
    let mut seen = Vec::new();
    for o in args.observe {
        if seen.contains(&o.channel.as_str()) {
            return Err(CliError::usage(format!(
                "channel `{}` is observed twice; list all its times in one --observe",
                o.channel
            )));
        }
        seen.push(o.channel.as_str());
        if spec.component(&o.channel).is_none() {
            return Err(CliError::usage(format!("unknown channel `{}`", o.channel)));
        }
    }
    args.config.check().map_err(classify)?;

    let bundle = match args.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::runtime(format!("cannot start {n} worker threads: {e}")))?
            .install(|| simulate(spec, &args.config)),
        None => simulate(spec, &args.config),
    }
    .map_err(classify)?;

    let observations = if args.observe.is_empty() {
        None
    } else {
        let mut merged: Vec<Vec<ObservationRecord>> = vec![Vec::new(); bundle.replicates.len()];
        for o in args.observe {
            let records = observe(&bundle, &o.channel, &o.times, o.error_sd, o.detection_limit, args.observation_seed)
                .map_err(classify)?;
            for (slot, recs) in merged.iter_mut().zip(records) {
                slot.extend(recs);
            }
        }
        Some(merged)
    };
    Ok(SimulateOutput { bundle, observations })
}

pub fn trajectories_csv(bundle: &TrajectoryBundle) -> Vec<u8> {
    let mut buf = Vec::new();
    write_trajectories_csv(bundle, &mut buf).expect("writing to memory");
    buf
}

pub fn observations_csv(records: &[Vec<ObservationRecord>]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_observations_csv(records, &mut buf).expect("writing to memory");
    buf
}

/// `replicate,<attributes...>` rows of realized attribute values.
pub fn attributes_csv(bundle: &TrajectoryBundle) -> Vec<u8> {
    let mut out = String::from("replicate");
    for a in &bundle.attribute_names {
        out.push(',');
        out.push_str(a);
    }
    out.push('\n');
    for (r, rep) in bundle.replicates.iter().enumerate() {
        out.push_str(&r.to_string());
        for v in &rep.attributes {
            out.push_str(&format!(",{v:.16e}"));
        }
        out.push('\n');
    }
    out.into_bytes()
}

pub fn warning_notes(bundle: &TrajectoryBundle) -> Vec<String> {
    let w = bundle.warnings;
    let mut notes = Vec::new();
    if w.negative_intensity > 0 {
        notes.push(format!("negative intensity clamped to zero at {} steps", w.negative_intensity));
    }
    if w.coarse_intensity > 0 {
        notes.push(format!(
            "intensity * dt exceeded {} at {} steps; consider a smaller --dt",
            dynograph_core::simulate::COARSE_INTENSITY_STEP,
            w.coarse_intensity
        ));
    }
    notes
}

/// Refuses to let two outputs share a path.
pub fn distinct_outputs(paths: &[Option<&Path>]) -> CliResult<()> {
    let given: Vec<&Path> = paths.iter().flatten().copied().collect();
    for (i, a) in given.iter().enumerate() {
        if given[i + 1..].contains(a) {
            return Err(CliError::usage(format!("{} is named as two different outputs", a.display())));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Kind;
    use dynograph_core::parse_model;

    #[test]
    fn parses_observe_flags() {
        let o: ObserveSpec = "V:0.5,1,2.5:0.3:1.7".parse().unwrap();
        assert_eq!(o.channel, "V");
        assert_eq!(o.times, vec![0.5, 1.0, 2.5]);
        assert_eq!(o.error_sd, 0.3);
        assert_eq!(o.detection_limit, Some(1.7));
        let o: ObserveSpec = "X:1:0:none".parse().unwrap();
        assert_eq!(o.detection_limit, None);
        for bad in ["X:1:0", ":1:0:none", "X:a:0:none", "X:1:-1:none", "X:1:0:eta", "X:1:nan:none"] {
            assert!(bad.parse::<ObserveSpec>().is_err(), "{bad}");
        }
    }

    fn ou() -> SystemSpec {
        parse_model("system ou\nattr theta = 1\ncomponent X : diffusion { drift = -theta * X; sigma = 1; init = 0; }\n")
            .unwrap()
    }

    fn args(observe: &[ObserveSpec], threads: Option<usize>) -> SimulateArgs<'_> {
        SimulateArgs { config: SimConfig::new(0.01, 1.0, 8, 3), observe, observation_seed: 9, threads }
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let obs = vec!["X:0.5,1:0.1:none".parse().unwrap()];
        let one = run(&ou(), &args(&obs, Some(1))).unwrap();
        let four = run(&ou(), &args(&obs, Some(4))).unwrap();
        assert_eq!(trajectories_csv(&one.bundle), trajectories_csv(&four.bundle));
        assert_eq!(
            observations_csv(one.observations.as_ref().unwrap()),
            observations_csv(four.observations.as_ref().unwrap())
        );
    }

    #[test]
    fn bad_observations_are_usage_errors() {
        let dup: Vec<ObserveSpec> = vec!["X:1:0:none".parse().unwrap(), "X:0.5:0:none".parse().unwrap()];
        assert_eq!(run(&ou(), &args(&dup, None)).err().unwrap().kind, Kind::Usage);
        let unknown = vec!["Y:1:0:none".parse().unwrap()];
        assert_eq!(run(&ou(), &args(&unknown, None)).err().unwrap().kind, Kind::Usage);
        let late = vec!["X:5:0:none".parse().unwrap()];
        assert_eq!(run(&ou(), &args(&late, None)).err().unwrap().kind, Kind::Usage);
    }

    #[test]
    fn blow_up_is_a_runtime_error() {
        let spec = parse_model("system boom\ncomponent X : ode { drift = X * X; init = 1; }\n").unwrap();
        let config = SimConfig::new(0.1, 5.0, 1, 0);
        let err = run(&spec, &SimulateArgs { config, observe: &[], observation_seed: 0, threads: None }).err().unwrap();
        assert_eq!(err.kind, Kind::Runtime);
        assert!(err.message.contains("replicate 0"), "{}", err.message);
    }

    #[test]
    fn attribute_table_has_one_row_per_replicate() {
        let out = run(&ou(), &args(&[], None)).unwrap();
        let csv = String::from_utf8(attributes_csv(&out.bundle)).unwrap();
        assert_eq!(csv.lines().next(), Some("replicate,theta"));
        assert_eq!(csv.lines().count(), 9);
    }

    #[test]
    fn outputs_must_differ() {
        let a = Path::new("a.csv");
        assert!(distinct_outputs(&[Some(a), None, Some(Path::new("b.csv"))]).is_ok());
        assert!(distinct_outputs(&[Some(a), Some(a)]).is_err());
    }
}
