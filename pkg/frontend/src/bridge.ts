/**
 * Browser transport: the same frames, carried as binary WebSocket
 * messages through any plain ws-to-tcp forwarder pointed at
 * `ghr serve`. The endpoint comes from runtime config, never from
 * code.
 */
import { GatewayReply, Transport } from "./api";
import { FrameDecoder, encodeFrame } from "./frames";

export class WebSocketTransport implements Transport {
  private waiting: Array<(reply: GatewayReply) => void> = [];
  private readonly decoder = new FrameDecoder();

  private constructor(private readonly socket: WebSocket) {
    socket.binaryType = "arraybuffer";
    socket.onmessage = (event) => {
      for (const message of this.decoder.push(new Uint8Array(event.data as ArrayBuffer))) {
        this.waiting.shift()?.(message as GatewayReply);
      }
    };
  }

  static connect(url: string): Promise<WebSocketTransport> {
    return new Promise((resolve, reject) => {
      const socket = new WebSocket(url);
      socket.onopen = () => resolve(new WebSocketTransport(socket));
      socket.onerror = () => reject(new Error(`cannot reach ${url}`));
    });
  }

  call(message: Record<string, unknown>): Promise<GatewayReply> {
    return new Promise((resolve) => {
      this.waiting.push(resolve);
      this.socket.send(encodeFrame(message));
    });
  }

  close(): void {
    this.socket.close();
  }
}
