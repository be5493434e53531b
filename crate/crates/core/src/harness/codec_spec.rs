use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use crate::bridge::BridgeCodec;
use crate::codec::{
    AffineCodec, BlockDctCodec, Codec, DownUpCodec, GaussianBlurCodec, IdentityCodec, UniformQuantCodec,
};
use crate::error::{CicError, Result};

/// Reply timeout for bridge adapters.
pub const BRIDGE_TIMEOUT: Duration = Duration::from_secs(30);

/// Parsed `--codec` value.
///
/// Grammar: `builtin:<name>?k=v&k=v` or `bridge:<program> [args...]`. The
/// `builtin:` prefix may be omitted.
#[derive(Debug, Clone, PartialEq)]
pub enum CodecSpec {
    Identity,
    Affine { a: f64, b: f64 },
    Quant { step: f64 },
    Dct { quality: f64 },
    DownUp { factor: usize },
    Blur { sigma: f64 },
    Bridge { command: String },
}

fn invalid(msg: impl Into<String>) -> CicError {
    CicError::ConfigInvalid(msg.into())
}

struct Params<'a> {
    codec: &'a str,
    values: BTreeMap<&'a str, &'a str>,
}

impl<'a> Params<'a> {
    fn parse(codec: &'a str, query: Option<&'a str>) -> Result<Self> {
        let mut values = BTreeMap::new();
        for pair in query.into_iter().flat_map(|q| q.split('&')).filter(|p| !p.is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| invalid(format!("codec parameter '{pair}' is not key=value")))?;
            if values.insert(k, v).is_some() {
                return Err(invalid(format!("codec parameter '{k}' given twice")));
            }
        }
        Ok(Self { codec, values })
    }

    fn take<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.values.remove(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|_| invalid(format!("{}: cannot parse {key}={raw}", self.codec))),
        }
    }

    fn finish(self) -> Result<()> {
        match self.values.keys().next() {
            Some(k) => Err(invalid(format!("{}: unknown parameter '{k}'", self.codec))),
            None => Ok(()),
        }
    }
}

impl CodecSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(cmd) = s.strip_prefix("bridge:") {
            if cmd.trim().is_empty() {
                return Err(invalid("bridge: needs an adapter command"));
            }
            return Ok(CodecSpec::Bridge {
                command: cmd.trim().to_owned(),
            });
        }
        let body = s.strip_prefix("builtin:").unwrap_or(s);
        let (name, query) = match body.split_once('?') {
            Some((n, q)) => (n, Some(q)),
            None => (body, None),
        };
        let mut p = Params::parse(name, query)?;
        let spec = match name {
            "identity" => CodecSpec::Identity,
            "affine" => CodecSpec::Affine {
                a: p.take("a", 0.5)?,
                b: p.take("b", 0.0)?,
            },
            "quant" => CodecSpec::Quant {
                step: p.take("step", 16.0)?,
            },
            "dct" => CodecSpec::Dct {
                quality: p.take("quality", 75.0)?,
            },
            "downup" => CodecSpec::DownUp {
                factor: p.take("factor", 2)?,
            },
            "blur" => CodecSpec::Blur {
                sigma: p.take("sigma", 1.5)?,
            },
            "" => return Err(invalid("empty codec spec")),
            other => return Err(invalid(format!("unknown codec '{other}'"))),
        };
        p.finish()?;
        Ok(spec)
    }

    /// Instantiate the codec; bridge specs spawn their adapter.
    pub fn build(&self) -> Result<Box<dyn Codec>> {
        Ok(match *self {
            CodecSpec::Identity => Box::new(IdentityCodec),
            CodecSpec::Affine { a, b } => {
                if !(a.is_finite() && b.is_finite()) {
                    return Err(invalid("affine parameters must be finite"));
                }
                Box::new(AffineCodec::new(a, b))
            }
            CodecSpec::Quant { step } => Box::new(UniformQuantCodec::new(step)?),
            CodecSpec::Dct { quality } => Box::new(BlockDctCodec::new(quality)?),
            CodecSpec::DownUp { factor } => Box::new(DownUpCodec::new(factor)?),
            CodecSpec::Blur { sigma } => Box::new(GaussianBlurCodec::new(sigma)?),
            CodecSpec::Bridge { ref command } => Box::new(BridgeCodec::spawn(command, BRIDGE_TIMEOUT)?),
        })
    }
}

impl FromStr for CodecSpec {
    type Err = CicError;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl fmt::Display for CodecSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodecSpec::Identity => write!(f, "builtin:identity"),
            CodecSpec::Affine { a, b } => write!(f, "builtin:affine?a={a}&b={b}"),
            CodecSpec::Quant { step } => write!(f, "builtin:quant?step={step}"),
            CodecSpec::Dct { quality } => write!(f, "builtin:dct?quality={quality}"),
            CodecSpec::DownUp { factor } => write!(f, "builtin:downup?factor={factor}"),
            CodecSpec::Blur { sigma } => write!(f, "builtin:blur?sigma={sigma}"),
            CodecSpec::Bridge { command } => write!(f, "bridge:{command}"),
        }
    }
}
