use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use threadsmith_core::draft::DraftError;
use threadsmith_core::eval::EvalError;
use threadsmith_core::llm::refine::LlmError;
use threadsmith_core::llm::TransportError;
use threadsmith_core::tree::TreeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    NotFound,
    Conflict,
    UpstreamLlm,
    Internal,
}

impl ErrorCode {
    pub fn status(self) -> u16 {
        match self {
            ErrorCode::BadRequest => 400,
            ErrorCode::NotFound => 404,
            ErrorCode::Conflict => 409,
            ErrorCode::UpstreamLlm => 502,
            ErrorCode::Internal => 500,
        }
    }
}

/// Error body returned by every endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError { code, message: message.into(), detail: None }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadRequest, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::NotFound, message)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Conflict, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Internal, message)
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }

    pub fn status(&self) -> u16 {
        self.code.status()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("error serialization is infallible")
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}: {}", self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, [("content-type", "application/json")], self.to_bytes()).into_response()
    }
}

/// Machine-readable form of a parse failure.
pub fn tree_error_detail(e: &TreeError) -> Value {
    let (kind, nodes): (&str, Vec<String>) = match e {
        TreeError::MalformedInput(_) => ("MalformedInput", vec![]),
        TreeError::MissingRoot => ("MissingRoot", vec![]),
        TreeError::MultipleRoots(ids) => ("MultipleRoots", ids.clone()),
        TreeError::DuplicateId(ids) => ("DuplicateId", ids.clone()),
        TreeError::DuplicateUser(id) => ("DuplicateUser", vec![id.clone()]),
        TreeError::CycleDetected(ids) => ("CycleDetected", ids.clone()),
        TreeError::DanglingParent { node, parent } => ("DanglingParent", vec![node.clone(), parent.clone()]),
        TreeError::UnknownNode(id) => ("UnknownNode", vec![id.clone()]),
        TreeError::UnknownSpeaker(id) => ("UnknownSpeaker", vec![id.clone()]),
    };
    json!({ "kind": kind, "nodes": nodes })
}

impl From<TreeError> for ApiError {
    fn from(e: TreeError) -> Self {
        let code = match e {
            TreeError::UnknownNode(_) | TreeError::UnknownSpeaker(_) => ErrorCode::NotFound,
            _ => ErrorCode::BadRequest,
        };
        ApiError::new(code, e.to_string()).with_detail(tree_error_detail(&e))
    }
}

impl From<DraftError> for ApiError {
    fn from(e: DraftError) -> Self {
        let code = match e {
            DraftError::NotFinal => ErrorCode::Conflict,
            _ => ErrorCode::BadRequest,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<TransportError> for ApiError {
    fn from(e: TransportError) -> Self {
        ApiError::new(ErrorCode::UpstreamLlm, e.to_string())
    }
}

impl From<LlmError> for ApiError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::Transport(t) => t.into(),
            LlmError::Draft(d) => d.into(),
            LlmError::EmptyCompletion => ApiError::new(ErrorCode::UpstreamLlm, e.to_string()),
            LlmError::UnrepairableStructure(ref t) => {
                ApiError::new(ErrorCode::UpstreamLlm, e.to_string()).with_detail(tree_error_detail(t))
            }
            LlmError::NotPending | LlmError::StaleSuggestion(_) => ApiError::conflict(e.to_string()),
            LlmError::UnknownSpeaker(_) => ApiError::not_found(e.to_string()),
            LlmError::NoEvidence(_) | LlmError::MissingEditedText => ApiError::bad_request(e.to_string()),
        }
    }
}

impl From<EvalError> for ApiError {
    fn from(e: EvalError) -> Self {
        ApiError::bad_request(e.to_string())
    }
}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        ApiError::internal(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_map_to_one_status_each() {
        let all = [
            ErrorCode::BadRequest,
            ErrorCode::NotFound,
            ErrorCode::Conflict,
            ErrorCode::UpstreamLlm,
            ErrorCode::Internal,
        ];
        let statuses: Vec<u16> = all.iter().map(|c| c.status()).collect();
        assert_eq!(statuses, [400, 404, 409, 502, 500]);
    }

    #[test]
    fn serialized_code_is_snake_case() {
        let body = ApiError::new(ErrorCode::UpstreamLlm, "x").to_bytes();
        assert_eq!(String::from_utf8(body).unwrap(), r#"{"code":"upstream_llm","message":"x"}"#);
    }

    #[test]
    fn cycle_detail_lists_nodes() {
        let e: ApiError = TreeError::CycleDetected(vec!["a".into(), "b".into()]).into();
        assert_eq!(e.status(), 400);
        assert_eq!(e.detail.unwrap()["kind"], "CycleDetected");
    }
}
