//! A batch of find-orbit jobs run on a worker pool, including one bad job.
//! `STARKZEEMAN_THREADS` caps the pool size.

use stark_zeeman::cli::{sweep, worker_count, Command, Job, RunConfig};

fn main() -> stark_zeeman::Result<()> {
    let mut jobs: Vec<Job> = (0..8)
        .map(|k| Job {
            command: Command::FindOrbit,
            config: RunConfig {
                system: Some(vec!["kepler".into()]),
                seed: Some(format!(
                    "circle:R={},noise=0.01,seed={k}",
                    0.45 + 0.05 * k as f64
                )),
                samples: Some(64),
                ..Default::default()
            },
        })
        .collect();
    jobs.push(Job {
        command: Command::FindOrbit,
        config: RunConfig {
            system: Some(vec!["nope".into()]),
            ..Default::default()
        },
    });

    println!("{} workers", worker_count());
    let (report, exit) = sweep(&jobs)?;
    for (k, r) in report["jobs"].as_array().into_iter().flatten().enumerate() {
        let n = r.pointer("/summary/norm_sqr").and_then(|v| v.as_f64());
        match n {
            Some(n) => println!("job {k}: |q| = {n:.8}"),
            None => println!("job {k}: {}", r.get("error").unwrap_or(r)),
        }
    }
    println!("aggregate exit {exit}");
    Ok(())
}
