use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use lobregime::feed::{MessageReader, ParseMode, Side};
use lobregime::series::{
    write_series, zscore_observations, LiquidityObservation, SeriesExtractor, SeriesMeta,
    Transform,
};

use crate::config::RunConfig;

struct PipelineOutput {
    observations: Vec<LiquidityObservation>,
    skipped: u64,
    crossed_events: u64,
}

pub fn run(input: &Path, out: &Path, cfg: &RunConfig) -> Result<i32> {
    let sides = cfg.side.sides();
    let outputs: Vec<Result<PipelineOutput>> = if sides.len() == 2 {
        // Independent single-writer pipelines, one reader each.
        std::thread::scope(|scope| {
            let handles: Vec<_> = sides
                .iter()
                .map(|&side| scope.spawn(move || extract_side(input, side, cfg)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("extract pipeline panicked"))
                .collect()
        })
    } else {
        vec![extract_side(input, sides[0], cfg)]
    };

    let single = sides.len() == 1;
    for (side, output) in sides.iter().zip(outputs) {
        let output = output?;
        if output.observations.is_empty() {
            eprintln!("no observations for the {side} side of {}", input.display());
            return Ok(2);
        }
        let path = if single { out.to_path_buf() } else { sided_path(out, *side) };
        let meta = SeriesMeta {
            side: *side,
            transform: cfg.transform,
            band_ticks: cfg.band_ticks,
        };
        let mut header = meta.header_pairs();
        header.extend(cfg.echo_pairs("extract"));
        header.push(("strict".into(), cfg.strict.to_string()));
        header.push(("skipped".into(), output.skipped.to_string()));
        header.push(("crossed_events".into(), output.crossed_events.to_string()));
        let writer = BufWriter::new(
            File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        );
        write_series(writer, &header, &output.observations)?;
        println!(
            "{side}: {} observations -> {} (skipped {}, crossed {})",
            output.observations.len(),
            path.display(),
            output.skipped,
            output.crossed_events
        );
    }
    Ok(0)
}

fn extract_side(input: &Path, side: Side, cfg: &RunConfig) -> Result<PipelineOutput> {
    let file = File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let mode = if cfg.strict { ParseMode::Strict } else { ParseMode::Lenient };
    let mut reader = MessageReader::new(BufReader::new(file), mode);
    // ZScore needs the whole batch; stream raw and standardize afterwards.
    let stream_transform = if cfg.transform == Transform::ZScore {
        Transform::Raw
    } else {
        cfg.transform
    };
    let mut extractor = SeriesExtractor::new(side, stream_transform, cfg.band_ticks, cfg.strict)?;
    let mut observations = Vec::new();
    for msg in &mut reader {
        let msg = msg?;
        if let Some(obs) = extractor.push(&msg)? {
            observations.push(obs);
        }
    }
    if cfg.transform == Transform::ZScore {
        zscore_observations(&mut observations);
    }
    Ok(PipelineOutput {
        observations,
        skipped: reader.skipped(),
        crossed_events: extractor.crossed_events(),
    })
}

fn sided_path(out: &Path, side: Side) -> PathBuf {
    let tag = match side {
        Side::Bid => "bid",
        Side::Ask => "ask",
    };
    match out.extension() {
        Some(ext) => out.with_extension(format!("{tag}.{}", ext.to_string_lossy())),
        None => out.with_extension(tag),
    }
}
