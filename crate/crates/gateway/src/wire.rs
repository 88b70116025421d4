//! Request bodies and reply extraction for each protocol.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use notana_core::backend::BackendError;
use notana_core::raster::Raster;
use serde_json::{json, Value};

use crate::config::{BackendConfig, Protocol};
use crate::transport::HttpRequest;

fn png_base64(image: &Raster) -> Result<String, BackendError> {
    let png = image
        .encode_png()
        .map_err(|e| BackendError::Config(format!("cannot encode request image: {e}")))?;
    Ok(B64.encode(png))
}

pub(crate) fn build_request(
    config: &BackendConfig,
    key: &str,
    image: &Raster,
    prompt: &str,
) -> Result<HttpRequest, BackendError> {
    let data = png_base64(image)?;
    let (url, headers, body) = match config.protocol {
        Protocol::OpenaiChat => (
            config.endpoint.clone(),
            vec![("Authorization".to_string(), format!("Bearer {key}"))],
            json!({
                "model": config.model,
                "messages": [{
                    "role": "user",
                    "content": [
                        {"type": "text", "text": prompt},
                        {"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{data}")}}
                    ]
                }]
            }),
        ),
        Protocol::GeminiGenerate => (
            format!("{}/models/{}:generateContent", config.endpoint.trim_end_matches('/'), config.model),
            vec![("x-goog-api-key".to_string(), key.to_string())],
            json!({
                "contents": [{
                    "role": "user",
                    "parts": [
                        {"text": prompt},
                        {"inline_data": {"mime_type": "image/png", "data": data}}
                    ]
                }]
            }),
        ),
    };
    Ok(HttpRequest {
        url,
        headers,
        body,
        timeout: config.timeout(),
    })
}

fn gemini_parts(reply: &Value) -> Result<&Vec<Value>, BackendError> {
    if let Some(reason) = reply.pointer("/promptFeedback/blockReason").and_then(Value::as_str) {
        return Err(BackendError::Rejected(format!("blocked: {reason}")));
    }
    reply
        .pointer("/candidates/0/content/parts")
        .and_then(Value::as_array)
        .ok_or_else(|| BackendError::InvalidResponse("no candidates[0].content.parts".into()))
}

pub(crate) fn extract_text(protocol: Protocol, reply: &Value) -> Result<String, BackendError> {
    match protocol {
        Protocol::OpenaiChat => {
            let content = reply
                .pointer("/choices/0/message/content")
                .ok_or_else(|| BackendError::InvalidResponse("no choices[0].message.content".into()))?;
            match content {
                Value::String(s) => Ok(s.clone()),
                Value::Array(parts) => Ok(parts
                    .iter()
                    .filter_map(|p| p.get("text").and_then(Value::as_str))
                    .collect::<Vec<_>>()
                    .join("")),
                other => Err(BackendError::InvalidResponse(format!("unexpected content {other}"))),
            }
        }
        Protocol::GeminiGenerate => Ok(gemini_parts(reply)?
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join("")),
    }
}

/// First inline image of a reply, as PNG/JPEG bytes.
pub(crate) fn extract_image_bytes(protocol: Protocol, reply: &Value) -> Result<Vec<u8>, BackendError> {
    if protocol != Protocol::GeminiGenerate {
        return Err(BackendError::Config("protocol cannot return images".into()));
    }
    let data = gemini_parts(reply)?
        .iter()
        .find_map(|p| {
            p.get("inline_data")
                .or_else(|| p.get("inlineData"))
                .and_then(|d| d.get("data"))
                .and_then(Value::as_str)
        })
        .ok_or_else(|| BackendError::Rejected("reply carries no image".into()))?;
    B64.decode(data)
        .map_err(|e| BackendError::InvalidResponse(format!("image data is not base64: {e}")))
}

/// Decodes any common image format into a raster of exactly `width` x `height`,
/// resampling when the model answered at another resolution.
pub(crate) fn decode_image(bytes: &[u8], width: u32, height: u32) -> Result<Raster, BackendError> {
    let decoded = image::load_from_memory(bytes)
        .map_err(|e| BackendError::InvalidResponse(format!("undecodable image: {e}")))?
        .to_rgba8();
    let raster = Raster::from_rgba(decoded.width(), decoded.height(), decoded.into_raw())
        .map_err(|e| BackendError::InvalidResponse(e.to_string()))?;
    Ok(fit_to(&raster, width, height))
}

/// Resamples to the given size (triangle filter); identity when sizes agree.
pub fn fit_to(raster: &Raster, width: u32, height: u32) -> Raster {
    if raster.dimensions() == (width, height) {
        return raster.clone();
    }
    let buffer = image::RgbaImage::from_raw(raster.width(), raster.height(), raster.as_bytes().to_vec())
        .expect("raster buffer matches its dimensions");
    let resized = image::imageops::resize(&buffer, width, height, image::imageops::FilterType::Triangle);
    Raster::from_rgba(width, height, resized.into_raw()).expect("resize yields requested size")
}
