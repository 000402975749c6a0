/** Typed client for the inference service's HTTP+JSON API. */

export interface ServiceInfo {
  checkpoint_id: string;
  resolution: number;
  domains: string[];
  scheme: Record<string, unknown> | null;
  iteration: number;
}

export interface TranslateResult {
  pngBytes: Uint8Array;
  latencyMs: number;
}

export class ServiceError extends Error {
  constructor(message: string, readonly status?: number) {
    super(message);
    this.name = "ServiceError";
  }
}

export function bytesToBase64(bytes: Uint8Array): string {
  let binary = "";
  const step = 0x8000;
  for (let i = 0; i < bytes.length; i += step) {
    binary += String.fromCharCode(...bytes.subarray(i, i + step));
  }
  return btoa(binary);
}

export function base64ToBytes(b64: string): Uint8Array {
  const binary = atob(b64);
  const bytes = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) bytes[i] = binary.charCodeAt(i);
  return bytes;
}

async function errorMessage(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { error?: string };
    if (body && typeof body.error === "string") return body.error;
  } catch {
    // fall through to the generic message
  }
  return `service responded with status ${response.status}`;
}

export class StudioApi {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async health(): Promise<boolean> {
    try {
      const response = await this.fetchFn(this.url("/health"));
      return response.ok;
    } catch {
      return false;
    }
  }

  async info(): Promise<ServiceInfo> {
    let response: Response;
    try {
      response = await this.fetchFn(this.url("/info"));
    } catch (exc) {
      throw new ServiceError(`service unreachable: ${exc}`);
    }
    if (!response.ok) throw new ServiceError(await errorMessage(response), response.status);
    return (await response.json()) as ServiceInfo;
  }

  async sampleMask(
    scheme: Record<string, unknown>,
    seed = 0,
    size?: number,
  ): Promise<Uint8Array> {
    const payload: Record<string, unknown> = { ...scheme, seed };
    if (size !== undefined) payload.size = size;
    let response: Response;
    try {
      response = await this.fetchFn(this.url("/masks/sample"), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(payload),
      });
    } catch (exc) {
      throw new ServiceError(`service unreachable: ${exc}`);
    }
    if (!response.ok) throw new ServiceError(await errorMessage(response), response.status);
    const body = (await response.json()) as { mask: string };
    return base64ToBytes(body.mask);
  }

  async translate(
    direction: string,
    imagePng: Uint8Array,
    maskPng?: Uint8Array,
    signal?: AbortSignal,
  ): Promise<TranslateResult> {
    const payload: Record<string, unknown> = {
      direction,
      image: bytesToBase64(imagePng),
    };
    if (maskPng) payload.mask = bytesToBase64(maskPng);
    let response: Response;
    try {
      response = await this.fetchFn(this.url("/translate"), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(payload),
        signal,
      });
    } catch (exc) {
      if (exc instanceof DOMException && exc.name === "AbortError") throw exc;
      throw new ServiceError(`service unreachable: ${exc}`);
    }
    if (!response.ok) throw new ServiceError(await errorMessage(response), response.status);
    const body = (await response.json()) as { image: string; latencyMs: number };
    return { pngBytes: base64ToBytes(body.image), latencyMs: body.latencyMs };
  }
}
