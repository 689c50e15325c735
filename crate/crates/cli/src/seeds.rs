use std::str::FromStr;

/// Seeds given as `a..b` (inclusive), a comma list, or a mix: `1..3,10`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedList(pub Vec<u64>);

impl FromStr for SeedList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut seeds = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if let Some((a, b)) = part.split_once("..") {
                let a: u64 = a
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad range start in {part:?}"))?;
                let b: u64 = b
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad range end in {part:?}"))?;
                if a > b {
                    return Err(format!("empty range {part:?}"));
                }
                if b - a >= 1_000_000 {
                    return Err(format!("range {part:?} is too long"));
                }
                seeds.extend(a..=b);
            } else {
                seeds.push(part.parse().map_err(|_| format!("bad seed {part:?}"))?);
            }
        }
        if seeds.is_empty() {
            return Err("no seeds given".into());
        }
        Ok(SeedList(seeds))
    }
}
