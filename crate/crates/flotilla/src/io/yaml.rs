//! YAML specification files. The application file has a single `app` root
//! key, the infrastructure file a single `infra` root key; both parsers
//! validate the result and refuse malformed specifications.

use serde::{Deserialize, Serialize};

use crate::model::{
    validate_application, validate_infrastructure, ApplicationSpec, InfrastructureSpec,
};

use super::ParseError;

#[derive(Serialize, Deserialize)]
struct AppFile {
    app: ApplicationSpec,
}

#[derive(Serialize, Deserialize)]
struct InfraFile {
    infra: InfrastructureSpec,
}

fn reject(violations: Vec<crate::model::Violation>) -> Result<(), ParseError> {
    if violations.is_empty() {
        Ok(())
    } else {
        let joined = violations
            .iter()
            .map(|v| format!("  - {v}"))
            .collect::<Vec<_>>()
            .join("\n");
        Err(ParseError::Invalid(joined))
    }
}

pub fn parse_application(text: &str) -> Result<ApplicationSpec, ParseError> {
    let file: AppFile = serde_yaml::from_str(text)?;
    reject(validate_application(&file.app))?;
    Ok(file.app)
}

pub fn parse_infrastructure(text: &str) -> Result<InfrastructureSpec, ParseError> {
    let file: InfraFile = serde_yaml::from_str(text)?;
    reject(validate_infrastructure(&file.infra))?;
    Ok(file.infra)
}

pub fn emit_application(app: &ApplicationSpec) -> String {
    serde_yaml::to_string(&AppFile { app: app.clone() }).expect("application serializes")
}

pub fn emit_infrastructure(infra: &InfrastructureSpec) -> String {
    serde_yaml::to_string(&InfraFile {
        infra: infra.clone(),
    })
    .expect("infrastructure serializes")
}
