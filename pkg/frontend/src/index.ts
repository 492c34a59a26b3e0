export * from "./types.js";
export * from "./wire.js";
export * from "./rays.js";
export * from "./tools.js";
export * from "./lod.js";
export * from "./gesture.js";
export * from "./client.js";
