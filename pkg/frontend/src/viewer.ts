/** Shaded 3-D mesh view with orbit and zoom. Vertex data comes straight
 * from service payloads; the viewer only uploads it to GPU buffers. */

import * as THREE from "three";
import { OrbitControls } from "three/addons/controls/OrbitControls.js";

export class MeshViewer {
  private readonly renderer: THREE.WebGLRenderer;
  private readonly scene: THREE.Scene;
  private readonly camera: THREE.PerspectiveCamera;
  private readonly controls: OrbitControls;
  private readonly material: THREE.MeshStandardMaterial;
  private mesh: THREE.Mesh | null = null;
  private faces: number[][] = [];

  constructor(container: HTMLElement, diagonal: number) {
    this.renderer = new THREE.WebGLRenderer({ antialias: true });
    this.renderer.setPixelRatio(window.devicePixelRatio);
    container.appendChild(this.renderer.domElement);

    this.scene = new THREE.Scene();
    this.scene.background = new THREE.Color(0x10141a);
    this.camera = new THREE.PerspectiveCamera(45, 1, 0.01, diagonal * 40);
    this.camera.position.set(diagonal * 0.9, diagonal * 0.6, diagonal * 0.9);

    const key = new THREE.DirectionalLight(0xffffff, 2.2);
    key.position.set(1, 2, 1.5);
    this.scene.add(key);
    const fill = new THREE.DirectionalLight(0x8899bb, 0.8);
    fill.position.set(-2, -1, -1);
    this.scene.add(fill);
    this.scene.add(new THREE.AmbientLight(0x404040));

    this.material = new THREE.MeshStandardMaterial({
      color: 0x4f9dde,
      roughness: 0.55,
      metalness: 0.05,
      side: THREE.DoubleSide,
    });

    this.controls = new OrbitControls(this.camera, this.renderer.domElement);
    this.controls.enableDamping = true;

    const resize = () => {
      const w = container.clientWidth || 640;
      const h = container.clientHeight || 480;
      this.renderer.setSize(w, h);
      this.camera.aspect = w / h;
      this.camera.updateProjectionMatrix();
    };
    resize();
    new ResizeObserver(resize).observe(container);

    const tick = () => {
      requestAnimationFrame(tick);
      this.controls.update();
      this.renderer.render(this.scene, this.camera);
    };
    tick();
  }

  setTopology(faces: number[][]): void {
    this.faces = faces;
  }

  showVertices(vertices: number[][]): void {
    const geometry = new THREE.BufferGeometry();
    const positions = new Float32Array(vertices.length * 3);
    for (let i = 0; i < vertices.length; i++) {
      positions[3 * i] = vertices[i][0];
      positions[3 * i + 1] = vertices[i][1];
      positions[3 * i + 2] = vertices[i][2];
    }
    const index = new Uint32Array(this.faces.length * 3);
    for (let f = 0; f < this.faces.length; f++) {
      index[3 * f] = this.faces[f][0];
      index[3 * f + 1] = this.faces[f][1];
      index[3 * f + 2] = this.faces[f][2];
    }
    geometry.setAttribute("position", new THREE.BufferAttribute(positions, 3));
    geometry.setIndex(new THREE.BufferAttribute(index, 1));
    geometry.computeVertexNormals();
    if (this.mesh) {
      this.mesh.geometry.dispose();
      this.mesh.geometry = geometry;
    } else {
      this.mesh = new THREE.Mesh(geometry, this.material);
      this.scene.add(this.mesh);
    }
  }

  /** Offscreen snapshot of arbitrary vertices, reusing this renderer;
   * grid thumbnails are drawn from the same buffers as the main view. */
  snapshot(vertices: number[][], size: number): string {
    const geometry = new THREE.BufferGeometry();
    const positions = new Float32Array(vertices.length * 3);
    for (let i = 0; i < vertices.length; i++) {
      positions[3 * i] = vertices[i][0];
      positions[3 * i + 1] = vertices[i][1];
      positions[3 * i + 2] = vertices[i][2];
    }
    const index = new Uint32Array(this.faces.length * 3);
    for (let f = 0; f < this.faces.length; f++) {
      index[3 * f] = this.faces[f][0];
      index[3 * f + 1] = this.faces[f][1];
      index[3 * f + 2] = this.faces[f][2];
    }
    geometry.setAttribute("position", new THREE.BufferAttribute(positions, 3));
    geometry.setIndex(new THREE.BufferAttribute(index, 1));
    geometry.computeVertexNormals();
    const mesh = new THREE.Mesh(geometry, this.material);
    const scene = new THREE.Scene();
    scene.background = new THREE.Color(0x181d24);
    scene.add(mesh);
    scene.add(new THREE.AmbientLight(0x808080));
    const light = new THREE.DirectionalLight(0xffffff, 2.0);
    light.position.set(1, 2, 1.5);
    scene.add(light);

    const prior = this.renderer.getSize(new THREE.Vector2());
    this.renderer.setSize(size, size, false);
    this.renderer.render(scene, this.camera);
    const url = this.renderer.domElement.toDataURL("image/png");
    this.renderer.setSize(prior.x, prior.y, false);
    geometry.dispose();
    return url;
  }
}
