use std::fmt::Write as _;

use crate::error::Result;
use crate::model::{
    count_parameters, receptive_field_table, Discriminator, DiscriminatorConfig, Generator,
    GeneratorConfig, ParamConvention,
};

/// Published encoder receptive fields for depths 1 to 6.
pub const PUBLISHED_RF: [usize; 6] = [3, 7, 23, 55, 119, 247];
pub const PUBLISHED_GENERATOR_PARAMS: usize = 1_041_152;
pub const PUBLISHED_DISCRIMINATOR_PARAMS: usize = 1_556_416;
/// Largest accepted relative deviation of the discriminator count.
pub const DISCRIMINATOR_TOLERANCE: f64 = 0.002;

/// The convention under which the generator count is reported.
pub const GENERATOR_CONVENTION: ParamConvention = ParamConvention {
    conv_bias: false,
    bn_affine: true,
    mask_channel: false,
};

/// The convention under which the discriminator count is reported.
pub const DISCRIMINATOR_CONVENTION: ParamConvention = ParamConvention {
    conv_bias: true,
    bn_affine: false,
    mask_channel: false,
};

fn thousands(n: usize) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "MATCH"
    } else {
        "MISMATCH"
    }
}

/// Receptive-field table and parameter counts for a generator with
/// `n_dilated` dilated layers and `base_filters` filters.
pub fn analyze_report(n_dilated: usize, base_filters: usize) -> Result<String> {
    let gcfg = GeneratorConfig::default()
        .with_dilated_layers(n_dilated)
        .with_base_filters(base_filters);
    let mut s = String::new();
    let _ = writeln!(s, "Encoder receptive field (kernel {})", gcfg.kernel);
    let _ = writeln!(
        s,
        "{:>5} {:>8} {:>6} {:>15}  published",
        "layer", "dilation", "stride", "receptive field"
    );
    for row in receptive_field_table(&gcfg)? {
        let rf = format!("{0}x{0}", row.receptive_field);
        let published = match PUBLISHED_RF.get(row.depth - 1) {
            Some(&p) => format!("{p}x{p} {}", verdict(p == row.receptive_field)),
            None => "-".into(),
        };
        let _ = writeln!(
            s,
            "{:>5} {:>8} {:>6} {:>15}  {published}",
            row.depth, row.dilation, row.stride, rf
        );
    }

    let g = Generator::<f32>::build(gcfg, 0)?;
    let d = Discriminator::<f32>::build(DiscriminatorConfig::default(), 0)?;
    let standard = n_dilated == 4 && base_filters == 128;
    let g_count = count_parameters(&g.stack, GENERATOR_CONVENTION);
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "Generator convention sweep (published {}):",
        thousands(PUBLISHED_GENERATOR_PARAMS)
    );
    for c in ParamConvention::all() {
        let n = count_parameters(&g.stack, c);
        let mark = if n == PUBLISHED_GENERATOR_PARAMS {
            "  <- MATCH"
        } else {
            ""
        };
        let _ = writeln!(s, "  {c}: {:>11}{mark}", thousands(n));
    }
    let _ = writeln!(
        s,
        "Generator parameters: {} [{GENERATOR_CONVENTION}] {}",
        thousands(g_count),
        if standard {
            format!(
                "{} published {}",
                verdict(g_count == PUBLISHED_GENERATOR_PARAMS),
                thousands(PUBLISHED_GENERATOR_PARAMS)
            )
        } else {
            "(non-default architecture, no published figure)".into()
        }
    );

    let d_count = count_parameters(&d.stack, DISCRIMINATOR_CONVENTION);
    let delta = d_count as i64 - PUBLISHED_DISCRIMINATOR_PARAMS as i64;
    let rel = delta as f64 / PUBLISHED_DISCRIMINATOR_PARAMS as f64;
    let _ = writeln!(
        s,
        "Discriminator parameters: {} [{DISCRIMINATOR_CONVENTION}] published {} delta {delta:+} ({:+.3}%) {}",
        thousands(d_count),
        thousands(PUBLISHED_DISCRIMINATOR_PARAMS),
        rel * 100.0,
        if rel.abs() <= DISCRIMINATOR_TOLERANCE {
            "WITHIN 0.2%"
        } else {
            "OUTSIDE 0.2%"
        }
    );
    let _ = writeln!(
        s,
        "  weights only: {}",
        thousands(count_parameters(&d.stack, ParamConvention::WEIGHTS_ONLY))
    );
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thousands_separators() {
        assert_eq!(thousands(1041152), "1,041,152");
        assert_eq!(thousands(999), "999");
        assert_eq!(thousands(1000), "1,000");
    }

    #[test]
    fn default_report() {
        let r = analyze_report(4, 128).unwrap();
        assert!(r.contains("Generator parameters: 1,041,152"), "{r}");
        assert!(r.contains("MATCH published 1,041,152"), "{r}");
        assert!(r.contains("delta -831"), "{r}");
        assert!(!r.contains("MISMATCH"), "{r}");
        assert_eq!(r.matches("<- MATCH").count(), 1);
    }
}
