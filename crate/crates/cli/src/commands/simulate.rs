use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use lobregime::feed::Side;
use lobregime::model::read_model;
use lobregime::series::{write_series, LiquidityObservation};
use lobregime::synth::{simulate, DbamModel, SimSpec};

use crate::config::RunConfig;

pub fn run(
    spec_path: &Path,
    out: &Path,
    states_out: Option<&Path>,
    seed_flag: Option<u64>,
    t_flag: Option<usize>,
    cfg: &RunConfig,
) -> Result<i32> {
    let doc = read_model(BufReader::new(
        File::open(spec_path).with_context(|| format!("opening {}", spec_path.display()))?,
    ))?;
    let t = match t_flag {
        Some(t) => t,
        None => doc
            .meta_value("t")
            .context("spec is missing t= (or pass --t)")?
            .parse()
            .context("bad t in spec")?,
    };
    let seed = match seed_flag {
        Some(seed) => seed,
        None => match doc.meta_value("seed") {
            Some(raw) => raw.parse().context("bad seed in spec")?,
            None => cfg.seed,
        },
    };
    let y0 = match doc.meta_value("y0") {
        Some(raw) => raw.parse().context("bad y0 in spec")?,
        None => 0.0,
    };
    let dbam_model = parse_dbam_model(doc.meta_value("dbam_model").unwrap_or("iid_ticks:0.1"))?;

    let spec = SimSpec { params: doc.params.clone(), t, dbam_model, y0, seed };
    let (states, data) = simulate(&spec)?;

    // Synthetic timestamps are the observation index; the side tag is a
    // convention with no meaning here.
    let observations: Vec<LiquidityObservation> = (0..t)
        .map(|i| LiquidityObservation {
            ts_ns: i as i64,
            side: Side::Bid,
            liq: data.y()[i],
            liq_lag: data.y_lag()[i],
            dbam: data.dbam()[i],
        })
        .collect();
    let mut header = cfg.echo_pairs("simulate");
    header.push(("transform".into(), "raw".into()));
    header.push(("k".into(), doc.params.num_states().to_string()));
    header.push(("t".into(), t.to_string()));
    header.push(("seed".into(), seed.to_string()));
    header.push(("y0".into(), y0.to_string()));
    header.push(("dbam_model".into(), render_dbam_model(dbam_model)));
    let writer =
        BufWriter::new(File::create(out).with_context(|| format!("creating {}", out.display()))?);
    write_series(writer, &header, &observations)?;

    let states_path = match states_out {
        Some(path) => path.to_path_buf(),
        None => out.with_extension("states"),
    };
    let mut states_file = BufWriter::new(
        File::create(&states_path).with_context(|| format!("creating {}", states_path.display()))?,
    );
    writeln!(states_file, "# lobregime states v1")?;
    writeln!(states_file, "# k={}", doc.params.num_states())?;
    writeln!(states_file, "# seed={seed}")?;
    for (i, state) in states.iter().enumerate() {
        writeln!(states_file, "{i},{}", state + 1)?;
    }
    println!(
        "simulated {t} observations -> {} (states -> {})",
        out.display(),
        states_path.display()
    );
    Ok(0)
}

fn parse_dbam_model(raw: &str) -> Result<DbamModel> {
    if raw == "zeros" {
        return Ok(DbamModel::Zeros);
    }
    if let Some(p) = raw.strip_prefix("iid_ticks:") {
        let p_move: f64 = p.parse().context("bad iid_ticks probability")?;
        return Ok(DbamModel::IidTicks { p_move });
    }
    bail!("unknown dbam_model {raw:?} (expected zeros or iid_ticks:<p>)");
}

fn render_dbam_model(model: DbamModel) -> String {
    match model {
        DbamModel::Zeros => "zeros".to_string(),
        DbamModel::IidTicks { p_move } => format!("iid_ticks:{p_move}"),
    }
}
