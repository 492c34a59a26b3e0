/** Parser for the service's wire-binary mesh framing.
 *
 * Layout (little-endian): 8-byte magic "VXMESH01", uint32 vertex count,
 * uint32 triangle count, float32 positions (v*3), uint32 indices (t*3).
 */

import type { MeshData } from "./types.js";

export const WIRE_MAGIC = "VXMESH01";

const HEADER_BYTES = 16;

export class WireFormatError extends Error {}

export function parseWireMesh(buffer: ArrayBuffer): MeshData {
  if (buffer.byteLength < HEADER_BYTES) {
    throw new WireFormatError(
      `buffer too small for header: ${buffer.byteLength} bytes`,
    );
  }
  const magic = new TextDecoder().decode(new Uint8Array(buffer, 0, 8));
  if (magic !== WIRE_MAGIC) {
    throw new WireFormatError(`bad magic ${JSON.stringify(magic)}`);
  }
  const view = new DataView(buffer);
  const vertexCount = view.getUint32(8, true);
  const triangleCount = view.getUint32(12, true);
  const expected = HEADER_BYTES + vertexCount * 12 + triangleCount * 12;
  if (buffer.byteLength !== expected) {
    throw new WireFormatError(
      `payload is ${buffer.byteLength} bytes, framing implies ${expected}`,
    );
  }
  const positions = new Float32Array(
    buffer.slice(HEADER_BYTES, HEADER_BYTES + vertexCount * 12),
  );
  const indices = new Uint32Array(buffer.slice(HEADER_BYTES + vertexCount * 12));
  for (let i = 0; i < indices.length; i++) {
    if (indices[i] >= vertexCount) {
      throw new WireFormatError(
        `index ${indices[i]} out of range (${vertexCount} vertices)`,
      );
    }
  }
  return { vertexCount, triangleCount, positions, indices };
}
