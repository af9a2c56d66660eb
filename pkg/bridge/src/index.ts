/** @file Public surface of the recolor bridge client. */

export {
  ArrayView,
  TypedData,
  WireDtype,
  BYTES_PER_ELEMENT,
  fromBytes,
  shapeSize,
  toBytes,
  view,
} from "./arrayview.js";
export {
  ABI_STRING,
  Frame,
  FrameDecoder,
  FrameHeader,
  PROTOCOL_VERSION,
  decodePayload,
  encodeFrame,
} from "./protocol.js";
export {
  BridgeCallError,
  BridgeErrorCode,
  BridgeSession,
  EpisodeClient,
  HelloInfo,
  SessionOptions,
  StepResult,
  withEpisode,
} from "./session.js";
