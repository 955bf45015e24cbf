/** Bookmarks persisted in localStorage, and download helpers for
 * exporting codes and service-rendered OBJ text. */

export interface Bookmark {
  name: string;
  code: number[];
  condition: string[] | null;
}

const STORAGE_KEY = "shapespace.bookmarks";

interface StringStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

export function loadBookmarks(store: StringStore): Bookmark[] {
  const raw = store.getItem(STORAGE_KEY);
  if (!raw) return [];
  try {
    const parsed = JSON.parse(raw) as Bookmark[];
    return Array.isArray(parsed) ? parsed : [];
  } catch {
    return [];
  }
}

export function saveBookmarks(store: StringStore, bookmarks: Bookmark[]): void {
  store.setItem(STORAGE_KEY, JSON.stringify(bookmarks));
}

export function addBookmark(
  store: StringStore,
  bookmark: Bookmark,
): Bookmark[] {
  const all = loadBookmarks(store).filter((b) => b.name !== bookmark.name);
  all.push(bookmark);
  saveBookmarks(store, all);
  return all;
}

/** The OBJ text is written exactly as the service produced it, so the
 * file is byte-identical to the CLI decoding the same code. */
export function objFileContents(serviceObjText: string): string {
  return serviceObjText;
}

export function codeFileContents(code: number[]): string {
  return code.map((v) => String(v)).join(" ") + "\n";
}

export function triggerDownload(
  doc: Document,
  filename: string,
  contents: string,
  mime = "text/plain",
): void {
  const blob = new Blob([contents], { type: mime });
  const url = URL.createObjectURL(blob);
  const anchor = doc.createElement("a");
  anchor.href = url;
  anchor.download = filename;
  doc.body.appendChild(anchor);
  anchor.click();
  anchor.remove();
  URL.revokeObjectURL(url);
}
