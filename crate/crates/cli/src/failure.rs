use dmbp::Error;

pub const USAGE: u8 = 2;
pub const LOAD: u8 = 3;
pub const NUMERIC: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Argument(_) => USAGE,
            Error::Numeric(_) | Error::NonFinite(_) => NUMERIC,
            Error::Dimension(_)
            | Error::Load { .. }
            | Error::Format(_)
            | Error::Decode(_)
            | Error::Io(_) => LOAD,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;
