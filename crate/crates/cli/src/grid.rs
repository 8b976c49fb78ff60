/// Parses `start:step:stop` (inclusive) or a comma list into a strictly increasing grid.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, String> {
    let spec = spec.trim();
    let values: Vec<f64> = if spec.contains(':') {
        let parts: Vec<f64> = spec
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad grid number `{p}`: {e}")))
            .collect::<Result<_, _>>()?;
        let [start, step, stop] = parts[..] else {
            return Err(format!("grid `{spec}` must look like start:step:stop"));
        };
        if !(step > 0.0) {
            return Err(format!("grid step must be positive, got {step}"));
        }
        let count = ((stop - start) / step + 1e-9).floor();
        if !(count >= 0.0) || count > 1e6 {
            return Err(format!("grid `{spec}` is empty or too long"));
        }
        (0..=count as usize).map(|i| start + i as f64 * step).collect()
    } else {
        spec.split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad grid number `{p}`: {e}")))
            .collect::<Result<_, _>>()?
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(format!("grid `{spec}` has no usable points"));
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(format!("grid `{spec}` is not strictly increasing"));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_and_lists() {
        let g = parse_grid("0:0.5:2").unwrap();
        assert_eq!(g, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(parse_grid("0:0.1:4").unwrap().len(), 41);
        assert_eq!(parse_grid("0.5, 2").unwrap(), vec![0.5, 2.0]);
        assert!(parse_grid("2,1").is_err());
        assert!(parse_grid("0:0:1").is_err());
        assert!(parse_grid("a,b").is_err());
        assert!(parse_grid("1:2").is_err());
    }
}
