import { mountApp } from './app.js';

const params = new URLSearchParams(window.location.search);
const root = document.getElementById('app');
if (root === null) {
  throw new Error('missing #app container');
}
mountApp(root, {
  authUrl: params.get('auth') ?? 'https://localhost:8440',
  voteUrl: params.get('vote') ?? 'https://localhost:8442',
  listsUrl: params.get('lists') ?? '',
});
