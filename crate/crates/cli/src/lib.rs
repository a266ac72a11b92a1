// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Library behind the `hptmt` binary: CSV ingestion, run configuration,
//! reference oracles with the verification suites built on them,
//! benchmarks and the MDS runner.

pub mod bench;
pub mod config;
pub mod csvio;
pub mod gen;
pub mod mdscmd;
pub mod oracle;
pub mod verify;

use thiserror::Error;

pub use csvio::CsvError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error(transparent)]
    Core(#[from] hptmt_core::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Verification(_) => EXIT_VERIFY_FAILED,
            _ => EXIT_RUNTIME,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
