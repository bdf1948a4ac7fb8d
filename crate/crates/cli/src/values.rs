//! Value lists for sweeps: `a..b`, `a..b:step`, `a,b,c` or a single value.

pub fn parse_values(text: &str) -> Result<Vec<f64>, String> {
    let text = text.trim();
    if let Some((lo, rest)) = text.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((hi, step)) => (hi, number(step)?),
            None => (rest, 1.0),
        };
        let (lo, hi) = (number(lo)?, number(hi)?);
        if step <= 0.0 {
            return Err(format!("`{text}`: step must be positive"));
        }
        if hi < lo {
            return Err(format!("`{text}`: upper bound is below lower bound"));
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        // Rounded so a decimal step does not leave binary residue.
        return Ok((0..n).map(|i| ((lo + i as f64 * step) * 1e9).round() / 1e9).collect());
    }
    text.split(',').map(number).collect()
}

fn number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("`{s}` is not a number"))
}

/// Values that must be positive whole numbers.
pub fn whole(values: &[f64], name: &str) -> Result<Vec<usize>, String> {
    values
        .iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(format!("{name} = {v} must be a whole number"))
            }
        })
        .collect()
}

/// A `lo..hi` count range or a single count.
pub fn parse_count_range(text: &str) -> Result<(usize, usize), String> {
    let bad = || format!("`{text}` is not a count or `lo..hi` range");
    match text.split_once("..") {
        Some((lo, hi)) => Ok((
            lo.trim().parse().map_err(|_| bad())?,
            hi.trim().parse().map_err(|_| bad())?,
        )),
        None => {
            let n = text.trim().parse().map_err(|_| bad())?;
            Ok((n, n))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_lists() {
        assert_eq!(parse_values("20..40").unwrap().len(), 21);
        assert_eq!(parse_values("7..20").unwrap().len(), 14);
        let alpha = parse_values("0.25..10.00:0.25").unwrap();
        assert_eq!(alpha.len(), 40);
        assert_eq!(alpha[0], 0.25);
        assert_eq!(alpha[39], 10.0);
        assert_eq!(parse_values("0.1..0.3:0.1").unwrap(), vec![0.1, 0.2, 0.3]);
        assert_eq!(parse_values("1, 3,5").unwrap(), vec![1.0, 3.0, 5.0]);
        assert_eq!(parse_values("3.5").unwrap(), vec![3.5]);
    }

    #[test]
    fn bad_lists() {
        assert!(parse_values("5..1").is_err());
        assert!(parse_values("1..5:0").is_err());
        assert!(parse_values("a,b").is_err());
        assert!(parse_values("").is_err());
        assert!(whole(&[2.5], "K").is_err());
    }

    #[test]
    fn count_ranges() {
        assert_eq!(parse_count_range("2..4").unwrap(), (2, 4));
        assert_eq!(parse_count_range("3").unwrap(), (3, 3));
        assert!(parse_count_range("x..4").is_err());
    }
}
