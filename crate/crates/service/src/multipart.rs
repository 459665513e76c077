use ic_core::io::{encode_pfm, encode_png};
use ic_core::Scene;

const BOUNDARY: &str = "ic-scene-upload-boundary";

/// Encodes `scene` as the multipart body expected by `POST /scenes`: float layers as PFM, the
/// mask as PNG. Returns the content type and the body. Parts named in `skip` are left out.
pub fn encode_scene_upload(scene: &Scene, skip: &[&str]) -> ic_core::Result<(String, Vec<u8>)> {
    let pfm = |img: &ic_core::FloatImage| -> ic_core::Result<Vec<u8>> {
        let mut buf = Vec::new();
        encode_pfm(img, &mut buf)?;
        Ok(buf)
    };
    let parts: Vec<(&str, Vec<u8>, &str)> = vec![
        ("fg_image", pfm(&scene.fg_image)?, "pfm"),
        ("bg_image", pfm(&scene.bg_image)?, "pfm"),
        ("fg_albedo", pfm(&scene.fg_albedo)?, "pfm"),
        ("bg_albedo", pfm(&scene.bg_albedo)?, "pfm"),
        ("fg_shading", pfm(&scene.fg_shading)?, "pfm"),
        ("bg_shading", pfm(&scene.bg_shading)?, "pfm"),
        ("fg_normals", pfm(&scene.fg_normals.to_image())?, "pfm"),
        ("bg_normals", pfm(&scene.bg_normals.to_image())?, "pfm"),
        ("bg_depth", pfm(scene.bg_depth.as_image())?, "pfm"),
        ("mask", encode_png(&scene.alpha.to_image())?, "png"),
    ];
    let mut body = Vec::new();
    for (name, bytes, ext) in parts.into_iter().filter(|(n, _, _)| !skip.contains(n)) {
        body.extend_from_slice(
            format!(
                "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{name}\"; filename=\"{name}.{ext}\"\r\nContent-Type: application/octet-stream\r\n\r\n"
            )
            .as_bytes(),
        );
        body.extend_from_slice(&bytes);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    Ok((format!("multipart/form-data; boundary={BOUNDARY}"), body))
}
