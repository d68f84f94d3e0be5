//! Parameter sweeps over a template configuration.

use rayon::prelude::*;

use super::config::{is_filesystem_safe, ExperimentConfig};
use super::experiment::{run_experiment, RunReport};
use crate::error::{Error, Result};

/// Environment variable capping the number of concurrent runs.
pub const WORKERS_ENV: &str = "EIGSHAPE_WORKERS";

#[derive(Debug, Clone, PartialEq)]
pub struct Variation {
    pub key: String,
    pub values: Vec<String>,
}

/// Parses `key=a,b,c`.
pub fn parse_variation(text: &str) -> Result<Variation> {
    let (key, rest) = text
        .split_once('=')
        .ok_or_else(|| Error::Format(format!("variation `{text}`: expected key=v1,v2,...")))?;
    let values: Vec<String> = rest
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(Error::Format(format!("variation `{text}`: no values")));
    }
    Ok(Variation {
        key: key.trim().to_string(),
        values,
    })
}

fn suffix(value: &str) -> String {
    value
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Cartesian product of the variations applied to `template`. Each run id
/// gets `_key=value` style suffixes (with `=` written as `-`).
pub fn expand(
    template: &ExperimentConfig,
    variations: &[Variation],
) -> Result<Vec<ExperimentConfig>> {
    let mut configs = vec![template.clone()];
    for var in variations {
        let mut next = Vec::with_capacity(configs.len() * var.values.len());
        for cfg in &configs {
            for value in &var.values {
                let mut c = cfg.clone();
                c.set(&var.key, value)
                    .map_err(|m| Error::Format(format!("variation {}={value}: {m}", var.key)))?;
                let short = var.key.rsplit('.').next().unwrap_or(&var.key);
                c.output.run_id =
                    format!("{}_{}-{}", c.output.run_id, suffix(short), suffix(value));
                debug_assert!(is_filesystem_safe(&c.output.run_id));
                next.push(c);
            }
        }
        configs = next;
    }
    for c in &configs {
        c.validate()?;
    }
    Ok(configs)
}

pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

/// Runs every configuration, at most `workers` at a time. Results keep the
/// input order; a failed run does not stop the others.
pub fn run_sweep(configs: &[ExperimentConfig], workers: usize) -> Result<Vec<Result<RunReport>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Format(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        configs
            .par_iter()
            .map(|c| run_experiment(c).map(|out| out.report))
            .collect()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variation_parsing() {
        let v = parse_variation("coeff.seed=1,2,3").unwrap();
        assert_eq!(v.key, "coeff.seed");
        assert_eq!(v.values, ["1", "2", "3"]);
        assert!(parse_variation("coeff.seed").is_err());
        assert!(parse_variation("coeff.seed=").is_err());
    }

    #[test]
    fn expansion_is_cartesian() {
        let t = ExperimentConfig::default();
        let vars = [
            parse_variation("coeff.seed=1,2").unwrap(),
            parse_variation("coeff.generator=identity,random,checkerboard").unwrap(),
        ];
        let cs = expand(&t, &vars).unwrap();
        assert_eq!(cs.len(), 6);
        let mut ids: Vec<_> = cs.iter().map(|c| c.output.run_id.clone()).collect();
        assert_eq!(ids[0], "run_seed-1_generator-identity");
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 6);
        assert!(cs.iter().all(|c| is_filesystem_safe(&c.output.run_id)));
    }

    #[test]
    fn bad_values_are_rejected() {
        let t = ExperimentConfig::default();
        assert!(expand(&t, &[parse_variation("coeff.generator=spiral").unwrap()]).is_err());
        assert!(expand(&t, &[parse_variation("nope.key=1").unwrap()]).is_err());
        assert!(expand(&t, &[parse_variation("mesh.resolution=0").unwrap()]).is_err());
    }
}
