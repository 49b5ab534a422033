use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use serde::Serialize;

use crate::API_VERSION;

/// A request failure rendered as `{"v":1,"error":{...}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub field: Option<String>,
    pub message: String,
}

impl ApiError {
    pub fn invalid(field: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code: "invalid_parameter",
            field: Some(field.to_string()),
            message: message.into(),
        }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            code: "not_found",
            field: None,
            message: message.into(),
        }
    }

    pub fn reloading() -> Self {
        ApiError {
            status: StatusCode::SERVICE_UNAVAILABLE,
            code: "reloading",
            field: None,
            message: "artifacts are being reloaded".into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal",
            field: None,
            message: message.into(),
        }
    }

    /// Attaches the offending parameter to a core error raised while
    /// computing with it.
    pub fn from_core(e: cohortgate::Error, field: &str) -> Self {
        use cohortgate::Error as E;
        match e {
            E::Argument(_) | E::Type(_) | E::Shape(_) => ApiError {
                status: StatusCode::BAD_REQUEST,
                code: "invalid_parameter",
                field: Some(field.to_string()),
                message: e.to_string(),
            },
            other => ApiError {
                status: StatusCode::INTERNAL_SERVER_ERROR,
                code: other.code(),
                field: None,
                message: other.to_string(),
            },
        }
    }

    pub fn body(&self) -> Vec<u8> {
        #[derive(Serialize)]
        struct Inner<'a> {
            code: &'a str,
            #[serde(skip_serializing_if = "Option::is_none")]
            field: Option<&'a str>,
            message: &'a str,
        }
        #[derive(Serialize)]
        struct Outer<'a> {
            v: u32,
            error: Inner<'a>,
        }
        serde_json::to_vec(&Outer {
            v: API_VERSION,
            error: Inner {
                code: self.code,
                field: self.field.as_deref(),
                message: &self.message,
            },
        })
        .expect("error body serializes")
    }
}

impl From<cohortgate::Error> for ApiError {
    fn from(e: cohortgate::Error) -> Self {
        let field = match &e {
            cohortgate::Error::Type(_) => "feature",
            _ => "request",
        };
        ApiError::from_core(e, field)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, [(header::CONTENT_TYPE, "application/json")], self.body()).into_response()
    }
}
