/** Wire types mirroring the authoring service JSON API. */
export {};
