use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or arguments; exits with 2.
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] moealloc::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Serialize)]
struct Payload<'a> {
    kind: &'a str,
    message: String,
    exit_code: i32,
}

#[derive(Serialize)]
struct Envelope<'a> {
    error: Payload<'a>,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(_) | CliError::Io(_) => 1,
        }
    }

    pub fn is_broken_pipe(&self) -> bool {
        match self {
            CliError::Io(e) => e.kind() == std::io::ErrorKind::BrokenPipe,
            CliError::Core(e) => e.is_broken_pipe(),
            CliError::Usage(_) => false,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) => e.kind(),
            CliError::Io(_) => "io",
        }
    }

    pub fn report(&self, json: bool) {
        if json {
            eprintln!("{}", json_error(self.kind(), &self.to_string(), self.exit_code()));
        } else {
            eprintln!("error: {self}");
        }
    }
}

pub fn json_error(kind: &str, message: &str, exit_code: i32) -> String {
    let env = Envelope {
        error: Payload {
            kind,
            message: message.trim_end().to_string(),
            exit_code,
        },
    };
    serde_json::to_string(&env).expect("error payload serializes")
}
