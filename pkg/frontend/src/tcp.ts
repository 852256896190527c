/**
 * Node-side transport speaking raw frames to `ghr serve`. Tests and
 * terminal drivers use this; browsers go through the WebSocket bridge
 * in bridge.ts instead.
 */
import net from "node:net";
import { GatewayReply, Transport } from "./api";
import { FrameDecoder, encodeFrame } from "./frames";

type Waiter = {
  resolve: (reply: GatewayReply) => void;
  reject: (err: Error) => void;
};

export class TcpTransport implements Transport {
  // The gateway answers frames in arrival order on a connection, so a
  // FIFO of waiters is enough to pair replies with requests.
  private waiting: Waiter[] = [];
  private readonly decoder = new FrameDecoder();

  private constructor(private readonly socket: net.Socket) {
    socket.on("data", (chunk) => {
      for (const message of this.decoder.push(new Uint8Array(chunk))) {
        const waiter = this.waiting.shift();
        waiter?.resolve(message as GatewayReply);
      }
    });
    socket.on("error", (err) => this.failAll(err));
    socket.on("close", () => this.failAll(new Error("connection closed")));
  }

  static connect(host: string, port: number): Promise<TcpTransport> {
    return new Promise((resolve, reject) => {
      const socket = net.createConnection({ host, port });
      socket.once("connect", () => resolve(new TcpTransport(socket)));
      socket.once("error", reject);
    });
  }

  call(message: Record<string, unknown>): Promise<GatewayReply> {
    return new Promise((resolve, reject) => {
      this.waiting.push({ resolve, reject });
      this.socket.write(encodeFrame(message));
    });
  }

  close(): void {
    this.socket.destroy();
    this.failAll(new Error("transport closed"));
  }

  private failAll(err: Error): void {
    const stranded = this.waiting;
    this.waiting = [];
    for (const waiter of stranded) {
      waiter.reject(err);
    }
  }
}
