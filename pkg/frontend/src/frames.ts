/**
 * Frame codec for the gateway's TCP protocol: each message is a 4-byte
 * big-endian length followed by that many bytes of UTF-8 JSON. The same
 * bytes travel over a WebSocket bridge unchanged, so the codec sticks
 * to Uint8Array and works in both Node and the browser.
 */

export const MAX_FRAME_BYTES = 8 * 1024 * 1024;

const encoder = new TextEncoder();
const decoder = new TextDecoder();

export function encodeFrame(message: unknown): Uint8Array {
  const body = encoder.encode(JSON.stringify(message));
  if (body.byteLength > MAX_FRAME_BYTES) {
    throw new Error(`frame of ${body.byteLength} bytes exceeds the ${MAX_FRAME_BYTES} cap`);
  }
  const frame = new Uint8Array(4 + body.byteLength);
  new DataView(frame.buffer).setUint32(0, body.byteLength, false);
  frame.set(body, 4);
  return frame;
}

/**
 * Incremental decoder: feed it chunks as they arrive, collect whole
 * messages as they complete. Handles frames split across chunks and
 * several frames packed into one chunk.
 */
export class FrameDecoder {
  private pending: Uint8Array = new Uint8Array(0);

  push(chunk: Uint8Array): unknown[] {
    const joined = new Uint8Array(this.pending.byteLength + chunk.byteLength);
    joined.set(this.pending, 0);
    joined.set(chunk, this.pending.byteLength);
    this.pending = joined;

    const messages: unknown[] = [];
    while (this.pending.byteLength >= 4) {
      const view = new DataView(this.pending.buffer, this.pending.byteOffset);
      const length = view.getUint32(0, false);
      if (length > MAX_FRAME_BYTES) {
        throw new Error(`peer announced a ${length}-byte frame, refusing`);
      }
      if (this.pending.byteLength < 4 + length) {
        break;
      }
      const body = this.pending.subarray(4, 4 + length);
      messages.push(JSON.parse(decoder.decode(body)));
      this.pending = this.pending.slice(4 + length);
    }
    return messages;
  }
}
