//! Parameter grids for sweeps: either a comma list (`0.5,1,2`) or an
//! inclusive range with step (`start:stop:step`).

use anyhow::{anyhow, bail};

pub fn parse_grid(spec: &str) -> anyhow::Result<Vec<f64>> {
    let values = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            bail!("range grid must be start:stop:step, got {spec:?}");
        }
        let start: f64 = parts[0].parse().map_err(|e| anyhow!("bad start: {e}"))?;
        let stop: f64 = parts[1].parse().map_err(|e| anyhow!("bad stop: {e}"))?;
        let step: f64 = parts[2].parse().map_err(|e| anyhow!("bad step: {e}"))?;
        if step <= 0.0 || !step.is_finite() {
            bail!("grid step must be positive and finite, got {step}");
        }
        if stop < start {
            bail!("grid stop {stop} is below start {start}");
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize;
        (0..=count).map(|k| start + k as f64 * step).collect()
    } else {
        spec.split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| anyhow!("bad grid value {v:?}: {e}"))
            })
            .collect::<anyhow::Result<Vec<f64>>>()?
    };
    if values.is_empty() {
        bail!("empty grid {spec:?}");
    }
    for &v in &values {
        if !v.is_finite() || v < 0.0 {
            bail!("grid values must be finite and nonnegative, got {v}");
        }
    }
    Ok(values)
}
